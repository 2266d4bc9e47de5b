"""
Gerador de cenas sintéticas de estrada para treinamento em escala de bancada
"""

from pathlib import Path
from typing import List

import cv2
import numpy as np
import structlog

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH
from pinet.models.lane import LaneInstance, Sample
from pinet.models.params import SyntheticSceneConfig
from pinet.services.datasets import tusimple_record, write_tusimple_labels
from pinet.services.images import write_image

logger = structlog.get_logger(__name__)

LABEL_FILE = "label_data.json"
ARC_STEP = 10.0
_Y_BOTTOM = IMAGE_HEIGHT - 0.5
_MARGIN = 40.0
_SHIFT = 4
_LANE_COLORS = ((0.92, 0.92, 0.88), (0.93, 0.82, 0.25))


def _background(rng: np.random.Generator, noise: float) -> np.ndarray:
    base = np.full((IMAGE_HEIGHT, IMAGE_WIDTH, 3), 0.25, dtype=np.float32)
    if noise <= 0:
        return base
    coarse = rng.random((IMAGE_HEIGHT // 16, IMAGE_WIDTH // 16, 3)).astype(np.float32)
    texture = cv2.resize(coarse, (IMAGE_WIDTH, IMAGE_HEIGHT), interpolation=cv2.INTER_CUBIC)
    grain = rng.normal(0.0, 0.08, size=base.shape).astype(np.float32)
    return np.clip(base + noise * (0.3 * (texture - 0.5) + grain), 0.0, 1.0)


def _center_line(config: SyntheticSceneConfig, x0: float, vx: float, horizon: float, bend: float):
    y_top = horizon + 30.0
    ys = np.arange(y_top, _Y_BOTTOM + 1e-9, 0.25)
    depth = (_Y_BOTTOM - ys) / (_Y_BOTTOM - horizon)
    xs = (
        x0
        + config.perspective * (vx - x0) * depth
        + bend * 4.0 * (_Y_BOTTOM - ys) * (ys - horizon) / (_Y_BOTTOM - horizon) ** 2
    )
    return xs, ys


def _sample_arc(xs: np.ndarray, ys: np.ndarray, step: float = ARC_STEP):
    """Amostrar a linha central a cada `step` pixels de comprimento de arco (de baixo para cima)"""
    xs, ys = xs[::-1], ys[::-1]
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xs), np.diff(ys)))])
    targets = np.arange(0.0, arc[-1] + 1e-9, step)
    return np.interp(targets, arc, xs), np.interp(targets, arc, ys)


def generate_synthetic(config: SyntheticSceneConfig) -> Sample:
    """Renderizar faixas quadráticas como tiras claras sobre fundo texturizado"""
    rng = np.random.default_rng(config.seed)
    image = _background(rng, config.noise)

    count = int(rng.integers(config.lane_count[0], config.lane_count[1] + 1))
    horizon = rng.uniform(80.0, 100.0)
    vx = rng.uniform(200.0, 312.0)
    bend = rng.uniform(*config.curvature)
    slot = (IMAGE_WIDTH - 2 * _MARGIN) / max(count, 1)

    lanes: List[LaneInstance] = []
    for i in range(count):
        x0 = _MARGIN + (i + 0.5) * slot + rng.uniform(-0.15, 0.15) * slot
        xs, ys = _center_line(config, x0, vx, horizon, bend)

        lane_mask = np.zeros((IMAGE_HEIGHT, IMAGE_WIDTH), dtype=np.uint8)
        # coordenadas contínuas -> convenção do OpenCV (centro do pixel inteiro)
        pts = np.round(np.stack([xs - 0.5, ys - 0.5], axis=1) * (1 << _SHIFT)).astype(np.int32)
        cv2.polylines(lane_mask, [pts], False, 255, thickness=config.strip_width, lineType=cv2.LINE_AA, shift=_SHIFT)
        alpha = (lane_mask.astype(np.float32) / 255.0)[..., None]
        color = np.asarray(_LANE_COLORS[int(rng.integers(len(_LANE_COLORS)))], dtype=np.float32)
        image = image * (1.0 - alpha) + color * alpha

        lx, ly = _sample_arc(xs, ys)
        inside = (lx >= 0) & (lx < IMAGE_WIDTH) & (ly >= 0) & (ly < IMAGE_HEIGHT)
        if inside.sum() >= 2:
            lanes.append(LaneInstance.from_xy(lx[inside], ly[inside], instance_id=len(lanes) + 1))

    if config.occlusion > 0 and rng.random() < config.occlusion:
        for _ in range(int(rng.integers(1, 3))):
            w, h = rng.integers(30, 120), rng.integers(20, 60)
            x, y = rng.integers(0, IMAGE_WIDTH - w), rng.integers(int(horizon), IMAGE_HEIGHT - h)
            image[y:y + h, x:x + w] = rng.uniform(0.05, 0.2)

    if config.noise > 0:
        image = image + rng.normal(0.0, 0.03 * config.noise, size=image.shape).astype(np.float32)

    return Sample(
        image=np.clip(image, 0.0, 1.0).astype(np.float32),
        lanes=lanes,
        source_id=f"synthetic/{config.seed:06d}.png",
    )


def generate_dataset(config: SyntheticSceneConfig, count: int) -> List[Sample]:
    """Gerar `count` cenas com sementes config.seed + i"""
    return [generate_synthetic(config.model_copy(update={"seed": config.seed + i})) for i in range(count)]


def persist_synthetic(out_dir: Path | str, count: int, config: SyntheticSceneConfig) -> Path:
    """Gravar imagens PNG + arquivo de rótulos no formato TuSimple"""
    out_dir = Path(out_dir)
    h_samples = list(range(0, IMAGE_HEIGHT, 4))
    records = []
    for sample in generate_dataset(config, count):
        write_image(out_dir / sample.source_id, sample.image)
        records.append(tusimple_record(sample.source_id, sample.lanes, h_samples))
    label_file = write_tusimple_labels(out_dir / LABEL_FILE, records)
    logger.info("synthetic_dataset_written", frames=count, label_file=str(label_file))
    return label_file
