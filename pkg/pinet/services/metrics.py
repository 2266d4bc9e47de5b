"""
Métricas de avaliação: TuSimple (accuracy/FP/FN), CULane (IoU + F1)
e o gap médio entre o modelo completo e os recortados
"""

import asyncio
import json
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linear_sum_assignment

from pinet.models.report import CategoryScore, EvalReport, f1_score
from pinet.services.datasets import CULANE_SIZE, read_culane_lines
from pinet.utils.errors import FrameSetMismatch, MetricInputError

logger = structlog.get_logger(__name__)

# Constantes do avaliador público de cada benchmark
TUSIMPLE_PIXEL_THRESHOLD = 20.0
TUSIMPLE_POINT_RATIO = 0.85
CULANE_LANE_WIDTH = 30
CULANE_IOU_THRESHOLD = 0.5

# Arquivo de lista -> linha da tabela de resultados
CULANE_CATEGORIES = {
    "normal": "Normal",
    "crowd": "Crowded",
    "night": "Night",
    "noline": "No line",
    "shadow": "Shadow",
    "arrow": "Arrow",
    "hlight": "Dazzle light",
    "curve": "Curve",
    "cross": "Crossroad",
}
CULANE_SPLIT_DIR = Path("list") / "test_split"

T = TypeVar("T")
R = TypeVar("R")


class TusimpleFrame(BaseModel):
    """Faixas de um quadro como listas de x nos h_samples (-2 = ausente)"""

    raw_file: str
    h_samples: List[float]
    lanes: List[List[float]] = Field(default_factory=list)


class CulaneFrame(BaseModel):
    """Faixas de um quadro como polilinhas (n, 2) na resolução de origem"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    lanes: List[np.ndarray] = Field(default_factory=list)
    category: Optional[str] = None


def map_frames(fn: Callable[[T], R], items: Sequence[T], workers: int = 0) -> List[R]:
    """Aplicar `fn` a cada quadro, em paralelo quando workers > 1 (ordem preservada)"""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]

    async def _run() -> List[R]:
        semaphore = asyncio.Semaphore(workers)

        async def _one(item: T) -> R:
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        return await asyncio.gather(*[_one(item) for item in items])

    return asyncio.run(_run())


# ---------------------------------------------------------------- TuSimple

def lane_angle(xs: np.ndarray, ys: np.ndarray) -> float:
    """Inclinação da faixa (ajuste linear x = k*y + b) em radianos"""
    valid = xs >= 0
    if valid.sum() <= 1:
        return 0.0
    k = np.polyfit(ys[valid], xs[valid], 1)[0]
    return float(math.atan(k))


class TusimpleCounts(BaseModel):
    """Contagens inteiras de um quadro; somadas antes de virar taxas"""

    correct: int = 0
    gt_points: int = 0
    matched: int = 0
    wrong: int = 0
    missed: int = 0
    n_pred: int = 0
    n_gt: int = 0

    def __add__(self, other: "TusimpleCounts") -> "TusimpleCounts":
        return TusimpleCounts(**{k: getattr(self, k) + getattr(other, k) for k in TusimpleCounts.model_fields})


def tusimple_frame_counts(
    pred: TusimpleFrame,
    gt: TusimpleFrame,
    pixel_threshold: float = TUSIMPLE_PIXEL_THRESHOLD,
    point_ratio: float = TUSIMPLE_POINT_RATIO,
    angle_adjusted: bool = False,
) -> TusimpleCounts:
    if list(pred.h_samples) != list(gt.h_samples):
        raise MetricInputError(f"{gt.raw_file}: h_samples da predição diferem do ground truth")
    n_samples = len(gt.h_samples)
    for frame in (pred, gt):
        for lane in frame.lanes:
            if len(lane) != n_samples:
                raise MetricInputError(f"{frame.raw_file}: faixa com {len(lane)} valores para {n_samples} h_samples")

    ys = np.asarray(gt.h_samples, dtype=np.float64)
    gt_x = np.asarray(gt.lanes, dtype=np.float64).reshape(len(gt.lanes), n_samples)
    pred_x = np.asarray(pred.lanes, dtype=np.float64).reshape(len(pred.lanes), n_samples)
    gt_valid = gt_x >= 0
    pred_valid = pred_x >= 0

    if angle_adjusted:
        thresholds = np.array([pixel_threshold / math.cos(lane_angle(x, ys)) for x in gt_x])
    else:
        thresholds = np.full(len(gt_x), pixel_threshold)

    # hits[g, p, s]: ponto s da faixa g acertado pela predição p
    hits = (
        gt_valid[:, None, :]
        & pred_valid[None, :, :]
        & (np.abs(gt_x[:, None, :] - pred_x[None, :, :]) < thresholds[:, None, None])
    )
    per_pair = hits.sum(axis=2)
    gt_points = gt_valid.sum(axis=1)

    correct = matched = 0
    for g in range(len(gt_x)):
        if gt_points[g] == 0:
            continue
        best = int(per_pair[g].max()) if len(pred_x) else 0
        correct += best
        if best / gt_points[g] >= point_ratio:
            matched += 1

    n_gt = int((gt_points > 0).sum())
    n_pred = len(pred_x)
    return TusimpleCounts(
        correct=correct,
        gt_points=int(gt_points.sum()),
        matched=matched,
        wrong=max(n_pred - matched, 0),
        missed=n_gt - matched,
        n_pred=n_pred,
        n_gt=n_gt,
    )


def tusimple_report(counts: TusimpleCounts, n_frames: int) -> EvalReport:
    precision = counts.matched / counts.n_pred if counts.n_pred else 0.0
    recall = counts.matched / counts.n_gt if counts.n_gt else 0.0
    return EvalReport(
        benchmark="tusimple",
        accuracy=counts.correct / counts.gt_points if counts.gt_points else 0.0,
        fp_rate=counts.wrong / counts.n_pred if counts.n_pred else 0.0,
        fn_rate=counts.missed / counts.n_gt if counts.n_gt else 0.0,
        precision=min(precision, 1.0),
        recall=recall,
        f1=f1_score(min(precision, 1.0), recall),
        tp=counts.matched,
        fp=counts.wrong,
        fn=counts.missed,
        n_pred=counts.n_pred,
        n_gt=counts.n_gt,
        correct_points=counts.correct,
        gt_points=counts.gt_points,
        n_frames=n_frames,
    )


def tusimple_score(
    preds: Sequence[TusimpleFrame],
    gts: Sequence[TusimpleFrame],
    pixel_threshold: float = TUSIMPLE_PIXEL_THRESHOLD,
    point_ratio: float = TUSIMPLE_POINT_RATIO,
    angle_adjusted: bool = False,
    workers: int = 0,
) -> EvalReport:
    """Accuracy = soma de pontos corretos / soma de pontos do ground truth

    Uma faixa do ground truth é encontrada quando sua melhor predição acerta
    pelo menos `point_ratio` dos pontos; predições restantes são FP.
    """
    if len(preds) != len(gts):
        raise MetricInputError(f"{len(preds)} quadros de predição para {len(gts)} de ground truth")

    def _score(pair: Tuple[TusimpleFrame, TusimpleFrame]) -> TusimpleCounts:
        return tusimple_frame_counts(pair[0], pair[1], pixel_threshold, point_ratio, angle_adjusted)

    total = sum(map_frames(_score, list(zip(preds, gts)), workers), TusimpleCounts())
    return tusimple_report(total, len(gts))


# ------------------------------------------------------------------ CULane

def rasterize_lane(points: np.ndarray, shape: Tuple[int, int], width: float = CULANE_LANE_WIDTH) -> np.ndarray:
    """Máscara booleana dos pixels cujo centro está a <= width/2 da polilinha

    Cada segmento vira uma tira com extremidades arredondadas.
    """
    height, frame_width = shape
    mask = np.zeros(shape, dtype=bool)
    pts = np.asarray(points, dtype=np.float64)
    radius = width / 2.0
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        c0 = max(int(math.floor(min(x0, x1) - radius)), 0)
        c1 = min(int(math.ceil(max(x0, x1) + radius)) + 1, frame_width)
        r0 = max(int(math.floor(min(y0, y1) - radius)), 0)
        r1 = min(int(math.ceil(max(y0, y1) + radius)) + 1, height)
        if c0 >= c1 or r0 >= r1:
            continue
        px = np.arange(c0, c1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(r0, r1, dtype=np.float64)[:, None] + 0.5
        dx, dy = x1 - x0, y1 - y0
        length2 = dx * dx + dy * dy
        if length2 > 0:
            t = np.clip(((px - x0) * dx + (py - y0) * dy) / length2, 0.0, 1.0)
        else:
            t = np.zeros((r1 - r0, c1 - c0))
        dist2 = (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2
        mask[r0:r1, c0:c1] |= dist2 <= radius * radius
    return mask


def lane_iou(a: np.ndarray, b: np.ndarray, shape: Tuple[int, int], width: float = CULANE_LANE_WIDTH) -> float:
    mask_a = rasterize_lane(a, shape, width)
    mask_b = rasterize_lane(b, shape, width)
    union = np.logical_or(mask_a, mask_b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(mask_a, mask_b).sum() / union)


def iou_matrix(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], shape, width: float = CULANE_LANE_WIDTH) -> np.ndarray:
    pred_masks = [rasterize_lane(p, shape, width).ravel() for p in preds]
    gt_masks = [rasterize_lane(g, shape, width).ravel() for g in gts]
    ious = np.zeros((len(pred_masks), len(gt_masks)))
    for i, pm in enumerate(pred_masks):
        for j, gm in enumerate(gt_masks):
            union = np.logical_or(pm, gm).sum()
            ious[i, j] = np.logical_and(pm, gm).sum() / union if union else 0.0
    return ious


class CulaneCounts(BaseModel):
    tp: int = 0
    fp: int = 0
    fn: int = 0
    skipped: int = 0


def _drop_short(lanes: Iterable[np.ndarray]) -> Tuple[List[np.ndarray], int]:
    kept = [np.asarray(l, dtype=np.float64).reshape(-1, 2) for l in lanes]
    valid = [l for l in kept if len(l) >= 2]
    return valid, len(kept) - len(valid)


def culane_frame_counts(
    pred: CulaneFrame,
    gt: CulaneFrame,
    shape: Tuple[int, int] = (CULANE_SIZE[1], CULANE_SIZE[0]),
    width: float = CULANE_LANE_WIDTH,
    iou_threshold: float = CULANE_IOU_THRESHOLD,
) -> CulaneCounts:
    pred_lanes, skipped_pred = _drop_short(pred.lanes)
    gt_lanes, skipped_gt = _drop_short(gt.lanes)
    tp = 0
    if pred_lanes and gt_lanes:
        ious = iou_matrix(pred_lanes, gt_lanes, shape, width)
        rows, cols = linear_sum_assignment(ious, maximize=True)
        tp = int((ious[rows, cols] > iou_threshold).sum())
    return CulaneCounts(
        tp=tp,
        fp=len(pred_lanes) - tp,
        fn=len(gt_lanes) - tp,
        skipped=skipped_pred + skipped_gt,
    )


def culane_score(
    preds: Sequence[CulaneFrame],
    gts: Sequence[CulaneFrame],
    shape: Tuple[int, int] = (CULANE_SIZE[1], CULANE_SIZE[0]),
    width: float = CULANE_LANE_WIDTH,
    iou_threshold: float = CULANE_IOU_THRESHOLD,
    workers: int = 0,
) -> EvalReport:
    """Precisão, recall e F1 por IoU de faixas rasterizadas com 30 px de largura

    A categoria de cada quadro vem do ground truth; quadros sem categoria
    entram só no total.
    """
    if len(preds) != len(gts):
        raise MetricInputError(f"{len(preds)} quadros de predição para {len(gts)} de ground truth")

    def _score(pair: Tuple[CulaneFrame, CulaneFrame]) -> CulaneCounts:
        return culane_frame_counts(pair[0], pair[1], shape, width, iou_threshold)

    per_frame = map_frames(_score, list(zip(preds, gts)), workers)

    totals = CulaneCounts()
    by_category: Dict[str, CulaneCounts] = {}
    for gt, counts in zip(gts, per_frame):
        for target in [totals] + ([by_category.setdefault(gt.category, CulaneCounts())] if gt.category else []):
            target.tp += counts.tp
            target.fp += counts.fp
            target.fn += counts.fn
            target.skipped += counts.skipped
    if totals.skipped:
        logger.warning("culane_lanes_skipped", count=totals.skipped, reason="menos de 2 pontos")

    overall = CategoryScore.from_counts(totals.tp, totals.fp, totals.fn)
    return EvalReport(
        benchmark="culane",
        precision=overall.precision,
        recall=overall.recall,
        f1=overall.f1,
        tp=totals.tp,
        fp=totals.fp,
        fn=totals.fn,
        n_pred=totals.tp + totals.fp,
        n_gt=totals.tp + totals.fn,
        n_frames=len(gts),
        skipped_lanes=totals.skipped,
        categories={
            name: CategoryScore.from_counts(c.tp, c.fp, c.fn) for name, c in sorted(by_category.items())
        },
    )


def ablation_gap(perf_full: Sequence[float], perf_clipped: Sequence[float]) -> float:
    """Média de (completo - recortado) sobre N avaliações pareadas"""
    if len(perf_full) != len(perf_clipped):
        raise MetricInputError(f"séries com tamanhos diferentes: {len(perf_full)} vs {len(perf_clipped)}")
    if not perf_full:
        raise MetricInputError("séries vazias")
    return float(np.mean(np.asarray(perf_full, dtype=np.float64) - np.asarray(perf_clipped, dtype=np.float64)))


# ------------------------------------------------- leitura dos diretórios

def read_tusimple_frames(path: Path | str) -> Dict[str, TusimpleFrame]:
    """Quadros de um arquivo JSON-por-linha ou de todos os *.json de um diretório"""
    path = Path(path)
    files = sorted(path.rglob("*.json")) if path.is_dir() else [path]
    frames: Dict[str, TusimpleFrame] = {}
    for file in files:
        for number, line in enumerate(file.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                frame = TusimpleFrame(
                    raw_file=record["raw_file"],
                    h_samples=record["h_samples"],
                    lanes=record.get("lanes", []),
                )
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise MetricInputError(f"{file}:{number}: registro inválido ({e})") from e
            frames[frame.raw_file] = frame
    return frames


def read_culane_frames(directory: Path | str) -> Dict[str, CulaneFrame]:
    """Todos os '*.lines.txt' do diretório, chaveados pelo caminho relativo sem sufixo"""
    directory = Path(directory)
    frames = {}
    for file in sorted(directory.rglob("*.lines.txt")):
        name = file.relative_to(directory).as_posix()[: -len(".lines.txt")]
        frames[name] = CulaneFrame(name=name, lanes=read_culane_lines(file))
    return frames


def read_culane_categories(gt_dir: Path | str) -> Dict[str, str]:
    """Quadro -> categoria a partir de list/test_split/test*_<nome>.txt"""
    split_dir = Path(gt_dir) / CULANE_SPLIT_DIR
    categories: Dict[str, str] = {}
    if not split_dir.is_dir():
        return categories
    for list_file in sorted(split_dir.glob("test*_*.txt")):
        key = list_file.stem.split("_", 1)[1]
        category = CULANE_CATEGORIES.get(key)
        if category is None:
            logger.warning("culane_unknown_split", file=list_file.name)
            continue
        for line in list_file.read_text().splitlines():
            if line.strip():
                image = line.split()[0].lstrip("/")
                categories[image.rsplit(".", 1)[0]] = category
    return categories


def pair_frames(preds: Dict[str, T], gts: Dict[str, T]) -> Tuple[List[T], List[T]]:
    """Alinhar predições e ground truth pelo nome do quadro"""
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise FrameSetMismatch(missing)
    names = sorted(gts)
    return [preds[n] for n in names], [gts[n] for n in names]


# ------------------------------------------------------------- relatório

def format_report(report: EvalReport) -> str:
    """Tabela em texto: uma linha por categoria + total (CULane) ou linha única (TuSimple)"""
    if report.benchmark == "culane":
        lines = [f"{'Category':<14}{'TP':>8}{'FP':>8}{'FN':>8}{'Precision':>11}{'Recall':>9}{'F1':>8}"]
        for name in CULANE_CATEGORIES.values():
            score = report.categories.get(name)
            if score is None:
                continue
            if name == "Crossroad":
                # sem faixas no ground truth: só o número de FP é informativo
                lines.append(f"{name:<14}{'-':>8}{score.fp:>8}{'-':>8}{'-':>11}{'-':>9}{'-':>8}")
                continue
            lines.append(
                f"{name:<14}{score.tp:>8}{score.fp:>8}{score.fn:>8}"
                f"{score.precision:>11.4f}{score.recall:>9.4f}{score.f1 * 100:>8.2f}"
            )
        lines.append(
            f"{'Total':<14}{report.tp:>8}{report.fp:>8}{report.fn:>8}"
            f"{report.precision:>11.4f}{report.recall:>9.4f}{report.f1 * 100:>8.2f}"
        )
    else:
        lines = [
            f"{'Accuracy':>10}{'FP':>8}{'FN':>8}{'Precision':>11}{'Recall':>9}{'F1':>8}{'Frames':>8}",
            f"{report.accuracy * 100:>9.2f}%{report.fp_rate:>8.4f}{report.fn_rate:>8.4f}"
            f"{report.precision:>11.4f}{report.recall:>9.4f}{report.f1 * 100:>8.2f}{report.n_frames:>8}",
        ]
    return "\n".join(lines) + "\n"


def write_report(path: Path | str, report: EvalReport) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(report))
    path.with_suffix(".json").write_text(report.model_dump_json(indent=2))
    return path
