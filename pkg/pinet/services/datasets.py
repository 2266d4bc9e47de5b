"""
Leitura dos datasets TuSimple e CULane, densificação de anotações
e gravação nos formatos de disco de cada benchmark
"""

import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import structlog

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH
from pinet.models.lane import LaneInstance, Sample
from pinet.services.images import ingest_image
from pinet.utils.errors import LabelParseError

logger = structlog.get_logger(__name__)

TUSIMPLE_SIZE = (1280, 720)
CULANE_SIZE = (1640, 590)
MISSING_X = -2

# Pontos até 1 px além da borda são trazidos para dentro do quadro
_EDGE_TOLERANCE = 1.0


def _to_frame(xs: np.ndarray, ys: np.ndarray):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    keep = (
        (xs >= 0.0) & (ys >= 0.0)
        & (xs < IMAGE_WIDTH + _EDGE_TOLERANCE) & (ys < IMAGE_HEIGHT + _EDGE_TOLERANCE)
    )
    xs = np.minimum(xs[keep], np.nextafter(IMAGE_WIDTH, 0.0))
    ys = np.minimum(ys[keep], np.nextafter(IMAGE_HEIGHT, 0.0))
    return xs, ys


def rescale(xs, ys, source_size) -> tuple:
    """Escalar coordenadas do tamanho de origem para 512x256"""
    width, height = source_size
    return (
        np.asarray(xs, dtype=np.float64) * (IMAGE_WIDTH / width),
        np.asarray(ys, dtype=np.float64) * (IMAGE_HEIGHT / height),
    )


def _build_lanes(point_lists: Iterable[tuple], source_size) -> List[LaneInstance]:
    lanes: List[LaneInstance] = []
    for xs, ys in point_lists:
        xs, ys = _to_frame(*rescale(xs, ys, source_size))
        if len(xs) < 2:
            logger.debug("lane_dropped", points=len(xs))
            continue
        lanes.append(LaneInstance.from_xy(xs, ys, instance_id=len(lanes) + 1))
    return lanes


def _number_list(record: dict, field: str, source: Optional[str]) -> List[float]:
    values = record.get(field)
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise LabelParseError(field, "esperada uma lista de números", source)
    return [float(v) for v in values]


def parse_tusimple_record(label_record: str) -> dict:
    """Validar um registro (linha JSON) do arquivo de rótulos do TuSimple"""
    try:
        record = json.loads(label_record)
    except json.JSONDecodeError as e:
        raise LabelParseError("record", f"JSON inválido: {e.msg}") from e
    if not isinstance(record, dict):
        raise LabelParseError("record", "esperado um objeto JSON")

    raw_file = record.get("raw_file")
    if not isinstance(raw_file, str) or not raw_file:
        raise LabelParseError("raw_file", "caminho da imagem ausente")
    h_samples = _number_list(record, "h_samples", raw_file)
    lanes = record.get("lanes")
    if not isinstance(lanes, list):
        raise LabelParseError("lanes", "esperada uma lista de faixas", raw_file)
    parsed_lanes = []
    for i, lane in enumerate(lanes):
        xs = _number_list({"lanes": lane}, "lanes", raw_file)
        if len(xs) != len(h_samples):
            raise LabelParseError(
                "lanes", f"faixa {i} tem {len(xs)} valores para {len(h_samples)} h_samples", raw_file
            )
        parsed_lanes.append(xs)
    return {"raw_file": raw_file, "h_samples": h_samples, "lanes": parsed_lanes}


def parse_tusimple(label_record: str, root: Path | str = ".") -> Sample:
    """Converter um registro do TuSimple em amostra 512x256"""
    record = parse_tusimple_record(label_record)
    image, source_size = ingest_image(Path(root) / record["raw_file"])
    ys = np.asarray(record["h_samples"])
    point_lists = []
    for xs in record["lanes"]:
        xs = np.asarray(xs)
        valid = xs >= 0
        point_lists.append((xs[valid], ys[valid]))
    return Sample(image=image, lanes=_build_lanes(point_lists, source_size), source_id=record["raw_file"])


def read_culane_lines(lines_file: Path | str) -> List[np.ndarray]:
    """Ler um arquivo '<nome>.lines.txt' em coordenadas de origem"""
    lines_file = Path(lines_file)
    lanes = []
    for number, line in enumerate(lines_file.read_text().splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            values = [float(t) for t in tokens]
        except ValueError as e:
            raise LabelParseError(f"linha {number}", f"coordenada não numérica: {e}", str(lines_file)) from e
        if len(values) % 2:
            raise LabelParseError(
                f"linha {number}", f"número ímpar de coordenadas ({len(values)})", str(lines_file)
            )
        lanes.append(np.asarray(values, dtype=np.float64).reshape(-1, 2))
    return lanes


def parse_culane(image_path: Path | str, lines_file: Path | str) -> Sample:
    """Converter uma imagem do CULane e seu arquivo de linhas em amostra"""
    lanes_xy = read_culane_lines(lines_file)
    image, source_size = ingest_image(image_path)
    lanes = _build_lanes(((xy[:, 0], xy[:, 1]) for xy in lanes_xy), source_size)
    return Sample(image=image, lanes=lanes, source_id=str(image_path))


def densify(lane: LaneInstance, step: float = 10.0) -> LaneInstance:
    """Inserir pontos interpolados para que lacunas em x fiquem <= step"""
    pts = lane.as_array()
    xs, ys = [pts[0, 0]], [pts[0, 1]]
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        inserts = max(math.ceil(abs(x1 - x0) / step - 1e-9) - 1, 0)
        for k in range(1, inserts + 1):
            t = k / (inserts + 1)
            xs.append(x0 + t * (x1 - x0))
            ys.append(y0 + t * (y1 - y0))
        xs.append(x1)
        ys.append(y1)
    return LaneInstance.from_xy(xs, ys, lane.instance_id)


def resample_lane(lane: LaneInstance | np.ndarray, y_samples: Sequence[float]) -> List[float]:
    """Valores de x da faixa nos y pedidos (-2 onde a faixa não cobre)"""
    pts = lane.as_array() if isinstance(lane, LaneInstance) else np.asarray(lane, dtype=np.float64)
    ys_unique, inverse = np.unique(pts[:, 1], return_inverse=True)
    xs_mean = np.bincount(inverse, weights=pts[:, 0]) / np.bincount(inverse)
    out = []
    for y in y_samples:
        if len(ys_unique) >= 2 and ys_unique[0] <= y <= ys_unique[-1]:
            out.append(float(np.interp(y, ys_unique, xs_mean)))
        else:
            out.append(float(MISSING_X))
    return out


def default_h_samples(height: int) -> List[int]:
    """Linhas de amostragem no padrão TuSimple (160..710 de 10 em 10 para 720 px)"""
    return list(range(int(round(height * 160 / 720)), height, 10))


def load_tusimple(label_files: Sequence[Path | str], root: Path | str, strict: bool = False) -> List[Sample]:
    """Carregar todos os registros dos arquivos de rótulo"""
    samples = []
    for label_file in label_files:
        for number, line in enumerate(Path(label_file).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                samples.append(parse_tusimple(line, root))
            except (LabelParseError, OSError) as e:
                if strict:
                    raise
                logger.warning("tusimple_record_skipped", file=str(label_file), line=number, error=str(e))
    logger.info("tusimple_loaded", samples=len(samples), files=len(label_files))
    return samples


def load_culane(root: Path | str, list_file: Path | str, strict: bool = False) -> List[Sample]:
    """Carregar o CULane a partir de um arquivo de lista (train/val)"""
    root = Path(root)
    list_path = Path(list_file) if Path(list_file).is_absolute() else root / list_file
    samples = []
    for line in list_path.read_text().splitlines():
        tokens = line.split()
        if not tokens:
            continue
        # colunas extras (máscara de segmentação, flags) são ignoradas
        relative = tokens[0].lstrip("/")
        image_path = root / relative
        try:
            samples.append(parse_culane(image_path, image_path.with_suffix(".lines.txt")))
        except (LabelParseError, OSError) as e:
            if strict:
                raise
            logger.warning("culane_frame_skipped", image=relative, error=str(e))
    logger.info("culane_loaded", samples=len(samples), list_file=str(list_path))
    return samples


def tusimple_record(raw_file: str, lanes: Sequence[LaneInstance], h_samples: Sequence[float], scale=(1.0, 1.0)) -> Dict:
    """Registro TuSimple de faixas em 512x256, escaladas por (sx, sy) para a origem"""
    sx, sy = scale
    record_lanes = []
    for lane in lanes:
        pts = lane.as_array() * np.array([sx, sy])
        xs = resample_lane(pts, h_samples)
        if any(x >= 0 for x in xs):
            record_lanes.append([round(x, 3) if x >= 0 else MISSING_X for x in xs])
    return {"raw_file": raw_file, "lanes": record_lanes, "h_samples": list(h_samples)}


def write_tusimple_labels(path: Path | str, records: Iterable[Dict]) -> Path:
    """Gravar registros no formato JSON-por-linha do TuSimple"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fp:
        for record in records:
            fp.write(json.dumps(record) + "\n")
    return path


def write_culane_lines(path: Path | str, lanes_xy: Iterable[np.ndarray]) -> Path:
    """Gravar faixas (coordenadas de origem) em '<nome>.lines.txt'"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fp:
        for xy in lanes_xy:
            fp.write(" ".join(f"{x:.3f} {y:.3f}" for x, y in np.asarray(xy)) + "\n")
    return path
