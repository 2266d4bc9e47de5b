"""
Modelos das grades de rótulo e de predição (32 linhas x 64 colunas)

A grade é indexada em ordem row-major: linha = eixo vertical (y),
coluna = eixo horizontal (x). Cada célula cobre 8x8 pixels da imagem
de entrada 512x256.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

IMAGE_WIDTH = 512
IMAGE_HEIGHT = 256
CELL_SIZE = 8
GRID_ROWS = IMAGE_HEIGHT // CELL_SIZE
GRID_COLS = IMAGE_WIDTH // CELL_SIZE
GRID_SHAPE = (GRID_ROWS, GRID_COLS)
EMBEDDING_DIM = 4


def _as_grid(value, dtype, leading=()) -> np.ndarray:
    array = np.asarray(value, dtype=dtype)
    expected = tuple(leading) + GRID_SHAPE
    if array.shape != expected:
        raise ValueError(f"formato esperado {expected}, recebido {array.shape}")
    return array


class GroundTruthGrid(BaseModel):
    """Alvo de treinamento: existência, offsets e instância por célula"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    exist: np.ndarray = Field(..., description="c* binário (32x64)")
    offset_x: np.ndarray = Field(..., description="c_x* em [0,1) onde exist=1")
    offset_y: np.ndarray = Field(..., description="c_y* em [0,1) onde exist=1")
    instance: np.ndarray = Field(..., description="0 = fundo, k>0 = faixa k")

    @field_validator("exist", mode="before")
    @classmethod
    def _exist(cls, v):
        return _as_grid(v, np.float32)

    @field_validator("offset_x", "offset_y", mode="before")
    @classmethod
    def _offsets(cls, v):
        return _as_grid(v, np.float64)

    @field_validator("instance", mode="before")
    @classmethod
    def _instance(cls, v):
        return _as_grid(v, np.int64)

    @model_validator(mode="after")
    def _consistent(self):
        occupied = self.exist > 0
        if not np.array_equal(occupied, self.instance > 0):
            raise ValueError("instance>0 deve coincidir exatamente com exist=1")
        for name in ("offset_x", "offset_y"):
            values = getattr(self, name)[occupied]
            if values.size and (values.min() < 0.0 or values.max() >= 1.0):
                raise ValueError(f"{name} fora de [0,1) em célula com ponto-chave")
        return self

    @classmethod
    def empty(cls) -> "GroundTruthGrid":
        """Grade sem nenhum ponto-chave (ex: quadros de cruzamento)"""
        return cls(
            exist=np.zeros(GRID_SHAPE),
            offset_x=np.zeros(GRID_SHAPE),
            offset_y=np.zeros(GRID_SHAPE),
            instance=np.zeros(GRID_SHAPE),
        )

    @property
    def n_exist(self) -> int:
        return int((self.exist > 0).sum())

    @property
    def n_background(self) -> int:
        return int((self.exist <= 0).sum())


class PredictionGrid(BaseModel):
    """Saída de um módulo hourglass para um quadro"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    confidence: np.ndarray = Field(..., description="c_c em [0,1] (32x64)")
    offset: np.ndarray = Field(..., description="(c_x, c_y) em [0,1] (2x32x64)")
    embedding: np.ndarray = Field(..., description="F_i por célula (4x32x64)")

    @field_validator("confidence", mode="before")
    @classmethod
    def _confidence(cls, v):
        array = np.asarray(v, dtype=np.float64)
        if array.shape == (1,) + GRID_SHAPE:
            array = array[0]
        return _as_grid(array, np.float64)

    @field_validator("offset", mode="before")
    @classmethod
    def _offset(cls, v):
        return _as_grid(v, np.float64, leading=(2,))

    @field_validator("embedding", mode="before")
    @classmethod
    def _embedding(cls, v):
        return _as_grid(v, np.float64, leading=(EMBEDDING_DIM,))

    @classmethod
    def zeros(cls) -> "PredictionGrid":
        return cls(
            confidence=np.zeros(GRID_SHAPE),
            offset=np.zeros((2,) + GRID_SHAPE),
            embedding=np.zeros((EMBEDDING_DIM,) + GRID_SHAPE),
        )
