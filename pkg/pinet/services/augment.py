"""
Aumento de dados: transformações geométricas (imagem + rótulos) e fotométricas
"""

from typing import Iterable, List, Optional

import cv2
import numpy as np
import structlog

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH
from pinet.models.lane import LaneInstance, Sample
from pinet.models.params import AUGMENT_OPS, AugmentSettings

logger = structlog.get_logger(__name__)

# Centro de rotação na convenção do OpenCV (centro do pixel em coordenada inteira)
_CENTER = ((IMAGE_WIDTH - 1) / 2.0, (IMAGE_HEIGHT - 1) / 2.0)


def _transform_lanes(lanes: Iterable[LaneInstance], matrix: np.ndarray) -> List[LaneInstance]:
    """Aplicar a matriz afim 2x3 aos pontos e descartar o que sai do quadro"""
    out = []
    for lane in lanes:
        pts = lane.as_array() - 0.5
        moved = pts @ matrix[:, :2].T + matrix[:, 2] + 0.5
        inside = (
            (moved[:, 0] >= 0.0) & (moved[:, 0] < IMAGE_WIDTH)
            & (moved[:, 1] >= 0.0) & (moved[:, 1] < IMAGE_HEIGHT)
        )
        moved = moved[inside]
        if len(moved) < 2:
            logger.debug("lane_removed_by_augmentation", instance_id=lane.instance_id)
            continue
        out.append(LaneInstance.from_xy(moved[:, 0], moved[:, 1], lane.instance_id))
    return out


def _warp(sample: Sample, matrix: np.ndarray) -> Sample:
    image = cv2.warpAffine(
        sample.image, matrix, (IMAGE_WIDTH, IMAGE_HEIGHT),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )
    return sample.model_copy(
        update={"image": np.clip(image, 0.0, 1.0), "lanes": _transform_lanes(sample.lanes, matrix)}
    )


def flip_sample(sample: Sample) -> Sample:
    """Espelhamento horizontal: x -> 512 - x"""
    lanes = []
    for lane in sample.lanes:
        pts = lane.as_array()
        xs = IMAGE_WIDTH - pts[:, 0]
        inside = xs < IMAGE_WIDTH
        if inside.sum() >= 2:
            lanes.append(LaneInstance.from_xy(xs[inside], pts[inside, 1], lane.instance_id))
    image = np.ascontiguousarray(sample.image[:, ::-1])
    return sample.model_copy(update={"image": image, "lanes": lanes})


def translate_sample(sample: Sample, dx: float, dy: float) -> Sample:
    if dx == 0 and dy == 0:
        return sample.model_copy(deep=True)
    matrix = np.array([[1.0, 0.0, dx], [0.0, 1.0, dy]])
    return _warp(sample, matrix)


def rotate_sample(sample: Sample, degrees: float) -> Sample:
    """Rotação em torno do centro da imagem (graus, sentido anti-horário)"""
    if degrees == 0:
        return sample.model_copy(deep=True)
    return _warp(sample, cv2.getRotationMatrix2D(_CENTER, degrees, 1.0))


def add_noise(sample: Sample, rng: np.random.Generator, amplitude: float) -> Sample:
    noise = rng.uniform(-amplitude, amplitude, size=sample.image.shape).astype(np.float32)
    return sample.model_copy(update={"image": np.clip(sample.image + noise, 0.0, 1.0)})


def change_intensity(sample: Sample, factor: float) -> Sample:
    return sample.model_copy(update={"image": np.clip(sample.image * factor, 0.0, 1.0)})


def add_shadow(sample: Sample, rng: np.random.Generator, shadow_range=(0.4, 1.0)) -> Sample:
    """Sombra como rampa multiplicativa horizontal entre low e 1.0"""
    low = rng.uniform(*shadow_range)
    ramp = np.linspace(low, 1.0, IMAGE_WIDTH, dtype=np.float32)
    if rng.random() < 0.5:
        ramp = ramp[::-1]
    image = sample.image * ramp[None, :, None]
    return sample.model_copy(update={"image": np.clip(image, 0.0, 1.0)})


def augment(
    sample: Sample,
    ops: Iterable[str],
    seed: int,
    settings: Optional[AugmentSettings] = None,
) -> Sample:
    """Aplicar as operações pedidas em ordem fixa, de forma determinística pela semente"""
    settings = settings or AugmentSettings()
    requested = set(ops)
    unknown = requested - set(AUGMENT_OPS)
    if unknown:
        raise ValueError(f"operações de aumento desconhecidas: {sorted(unknown)}")

    rng = np.random.default_rng(seed)
    out = sample
    for op in AUGMENT_OPS:
        if op not in requested:
            continue
        if op == "flip":
            if rng.random() < 0.5:
                out = flip_sample(out)
        elif op == "translate":
            dx, dy = rng.uniform(-settings.max_translation, settings.max_translation, size=2)
            out = translate_sample(out, float(dx), float(dy))
        elif op == "rotate":
            out = rotate_sample(out, float(rng.uniform(-settings.max_rotation, settings.max_rotation)))
        elif op == "add_noise":
            out = add_noise(out, rng, settings.noise_amplitude)
        elif op == "intensity":
            out = change_intensity(out, float(rng.uniform(*settings.intensity_range)))
        elif op == "shadow":
            out = add_shadow(out, rng, settings.shadow_range)
    return out
