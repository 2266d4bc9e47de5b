"""
Pós-processamento: grade de predição -> faixas

Limiar de confiança, decodificação dos offsets, agrupamento no espaço de
embedding e ajuste de spline por faixa.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.interpolate import UnivariateSpline

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH, PredictionGrid
from pinet.models.lane import DetectedPoint, LaneInstance
from pinet.models.params import HyperParams
from pinet.services.encoding import decode_cell

logger = structlog.get_logger(__name__)

_X_MAX = float(np.nextafter(IMAGE_WIDTH, 0.0))
_Y_MAX = float(np.nextafter(IMAGE_HEIGHT, 0.0))
_SPLINE_ORDER = 3


def _clamp(x: float, y: float):
    return min(max(x, 0.0), _X_MAX), min(max(y, 0.0), _Y_MAX)


def extract_points(grid: PredictionGrid, conf_threshold: float) -> List[DetectedPoint]:
    """Um ponto por célula com confiança acima do limiar, em ordem row-major"""
    rows, cols = np.nonzero(grid.confidence > conf_threshold)
    points = []
    for row, col in zip(rows.tolist(), cols.tolist()):
        x, y = decode_cell(row, col, grid.offset[0, row, col], grid.offset[1, row, col])
        # offset = 1.0 na última coluna/linha cairia sobre a borda
        x, y = _clamp(x, y)
        points.append(
            DetectedPoint(
                x=x,
                y=y,
                confidence=float(grid.confidence[row, col]),
                embedding=grid.embedding[:, row, col].tolist(),
            )
        )
    return points


def assign_clusters(embeddings: np.ndarray, distance_threshold: float = 0.08) -> np.ndarray:
    """Rótulo de agrupamento (0..k-1) para cada embedding, na ordem recebida

    Cada ponto entra no primeiro agrupamento cuja média corrente está a menos
    de `distance_threshold`; caso contrário abre um agrupamento novo.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.empty(len(embeddings), dtype=np.int64)
    means: List[np.ndarray] = []
    counts: List[int] = []
    for i, e in enumerate(embeddings):
        for k, mean in enumerate(means):
            if np.linalg.norm(e - mean) < distance_threshold:
                counts[k] += 1
                mean += (e - mean) / counts[k]
                labels[i] = k
                break
        else:
            means.append(e.copy())
            counts.append(1)
            labels[i] = len(means) - 1
    return labels


def _is_horizontal(pts: np.ndarray) -> bool:
    extent = pts.max(axis=0) - pts.min(axis=0)
    return extent[1] < 0.5 * extent[0]


def _ordered(pts: np.ndarray) -> np.ndarray:
    """Ordenar por y (por x quando a faixa é horizontal)"""
    if _is_horizontal(pts):
        order = np.lexsort((pts[:, 1], pts[:, 0]))
    else:
        order = np.lexsort((pts[:, 0], pts[:, 1]))
    return pts[order]


def cluster(
    points: Sequence[DetectedPoint],
    distance_threshold: float = 0.08,
    min_cluster_size: int = 3,
) -> List[LaneInstance]:
    """Agrupar pontos detectados em faixas pela distância entre embeddings"""
    if not points:
        return []
    labels = assign_clusters(np.array([p.embedding for p in points]), distance_threshold)
    coords = np.array([[p.x, p.y] for p in points], dtype=np.float64)

    lanes: List[LaneInstance] = []
    discarded = 0
    for k in range(int(labels.max()) + 1):
        members = coords[labels == k]
        if len(members) < max(min_cluster_size, 2):
            discarded += 1
            continue
        pts = _ordered(members)
        lanes.append(LaneInstance.from_xy(pts[:, 0], pts[:, 1], instance_id=len(lanes) + 1))
    if discarded:
        logger.debug("clusters_discarded", count=discarded, kept=len(lanes))
    return lanes


def _collapse(u: np.ndarray, v: np.ndarray):
    """Valores repetidos de u viram um só, com a média de v"""
    u_unique, inverse = np.unique(u, return_inverse=True)
    v_mean = np.bincount(inverse, weights=v) / np.bincount(inverse)
    return u_unique, v_mean


def smooth(lane: LaneInstance, smoothing_per_point: float = 1.0) -> LaneInstance:
    """Spline cúbica de suavização x(y), ou y(x) para faixas horizontais"""
    pts = lane.as_array()
    if len(pts) <= _SPLINE_ORDER:
        return lane

    horizontal = _is_horizontal(pts)
    u, v = (pts[:, 0], pts[:, 1]) if horizontal else (pts[:, 1], pts[:, 0])
    u, v = _collapse(u, v)
    if len(u) <= _SPLINE_ORDER:
        fitted = v
    else:
        spline = UnivariateSpline(u, v, k=_SPLINE_ORDER, s=smoothing_per_point * len(u))
        fitted = spline(u)

    xs, ys = (u, fitted) if horizontal else (fitted, u)
    xs = np.clip(xs, 0.0, _X_MAX)
    ys = np.clip(ys, 0.0, _Y_MAX)
    return LaneInstance.from_xy(xs, ys, lane.instance_id)


def detect_with_points(
    grid: PredictionGrid, hp: Optional[HyperParams] = None
) -> Tuple[List[DetectedPoint], List[LaneInstance]]:
    """extract_points -> cluster -> smooth, devolvendo também os pontos detectados"""
    hp = hp or HyperParams()
    points = extract_points(grid, hp.conf_threshold)
    lanes = cluster(points, hp.cluster_distance, hp.min_cluster_size)
    if hp.smooth_lanes:
        lanes = [smooth(lane, hp.smoothing_per_point) for lane in lanes]
    return points, lanes


def detect(grid: PredictionGrid, hp: Optional[HyperParams] = None) -> List[LaneInstance]:
    return detect_with_points(grid, hp)[1]
