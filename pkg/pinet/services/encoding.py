"""
Conversão entre faixas em pixels e a grade de treinamento 32x64

Convenção: a célula de um ponto (x, y) é (linha=floor(y/8), coluna=floor(x/8)),
com limites fechados à esquerda e abertos à direita; o offset é a posição
relativa dentro da célula, em [0,1).
"""

import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch

from pinet.models.grid import CELL_SIZE, GRID_COLS, GRID_ROWS, GRID_SHAPE, IMAGE_HEIGHT, IMAGE_WIDTH, GroundTruthGrid
from pinet.models.lane import LaneInstance
from pinet.utils.errors import GridBoundsError, LabelError


def cell_of(x: float, y: float) -> Tuple[int, int]:
    """Célula (linha, coluna) que contém o pixel (x, y)"""
    return int(math.floor(y / CELL_SIZE)), int(math.floor(x / CELL_SIZE))


def decode_cell(row: int, col: int, off_x: float, off_y: float) -> Tuple[float, float]:
    """Posição em pixels de um ponto-chave a partir da célula e dos offsets"""
    if not (0 <= row < GRID_ROWS and 0 <= col < GRID_COLS):
        raise GridBoundsError(f"célula ({row}, {col}) fora da grade {GRID_ROWS}x{GRID_COLS}")
    return (col + off_x) * CELL_SIZE, (row + off_y) * CELL_SIZE


def _check_lane(index: int, lane: LaneInstance) -> None:
    if len(lane.points) < 2:
        raise LabelError(f"faixa {index} tem {len(lane.points)} ponto(s); mínimo é 2")
    for p in lane.points:
        if not (0.0 <= p.x < IMAGE_WIDTH and 0.0 <= p.y < IMAGE_HEIGHT):
            raise LabelError(f"faixa {index}: ponto ({p.x}, {p.y}) fora do quadro 512x256")


def encode_label(lanes: Sequence[LaneInstance]) -> GroundTruthGrid:
    """Construir a grade de rótulo (c*, c_x*, c_y*, instância) a partir das faixas"""
    # (linha, coluna) -> índice da faixa -> pontos
    buckets: Dict[Tuple[int, int], Dict[int, List[Tuple[float, float]]]] = {}
    for index, lane in enumerate(lanes, start=1):
        _check_lane(index, lane)
        for p in lane.points:
            buckets.setdefault(cell_of(p.x, p.y), {}).setdefault(index, []).append((p.x, p.y))

    exist = np.zeros(GRID_SHAPE, dtype=np.float32)
    offset_x = np.zeros(GRID_SHAPE, dtype=np.float64)
    offset_y = np.zeros(GRID_SHAPE, dtype=np.float64)
    instance = np.zeros(GRID_SHAPE, dtype=np.int64)

    for (row, col), per_lane in buckets.items():
        center_x = (col + 0.5) * CELL_SIZE
        center_y = (row + 0.5) * CELL_SIZE
        best = None
        for index in sorted(per_lane):
            pts = np.asarray(per_lane[index], dtype=np.float64)
            x, y = pts.mean(axis=0)
            distance = (x - center_x) ** 2 + (y - center_y) ** 2
            # menor distância ao centro; empate fica com o menor índice
            if best is None or distance < best[0]:
                best = (distance, index, x, y)
        _, index, x, y = best
        exist[row, col] = 1.0
        offset_x[row, col] = min(x / CELL_SIZE - col, np.nextafter(1.0, 0.0))
        offset_y[row, col] = min(y / CELL_SIZE - row, np.nextafter(1.0, 0.0))
        instance[row, col] = index

    return GroundTruthGrid(exist=exist, offset_x=offset_x, offset_y=offset_y, instance=instance)


def grids_to_tensors(grids: Sequence[GroundTruthGrid], device: str | torch.device = "cpu") -> Dict[str, torch.Tensor]:
    """Empilhar grades em tensores de lote (B, 32, 64)"""
    return {
        "exist": torch.as_tensor(np.stack([g.exist for g in grids]), dtype=torch.float32, device=device),
        "offset_x": torch.as_tensor(np.stack([g.offset_x for g in grids]), dtype=torch.float32, device=device),
        "offset_y": torch.as_tensor(np.stack([g.offset_y for g in grids]), dtype=torch.float32, device=device),
        "instance": torch.as_tensor(np.stack([g.instance for g in grids]), dtype=torch.long, device=device),
    }
