"""
Modelos de dados para pontos-chave, faixas e amostras de treinamento
"""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pinet.models.grid import EMBEDDING_DIM, IMAGE_HEIGHT, IMAGE_WIDTH


class KeyPoint(BaseModel):
    """Ponto-chave de uma faixa em pixels da imagem de entrada"""

    model_config = ConfigDict(frozen=True)

    x: float = Field(..., ge=0.0, lt=IMAGE_WIDTH, description="Coordenada x em [0,512)")
    y: float = Field(..., ge=0.0, lt=IMAGE_HEIGHT, description="Coordenada y em [0,256)")
    instance_id: int = Field(0, ge=0, description="Identificador da faixa")


class LaneInstance(BaseModel):
    """Pontos ordenados de uma única faixa"""

    points: List[KeyPoint] = Field(..., min_length=2, description="Pontos da faixa")

    @model_validator(mode="after")
    def _single_instance(self):
        ids = {p.instance_id for p in self.points}
        if len(ids) != 1:
            raise ValueError(f"pontos com instance_id diferentes: {sorted(ids)}")
        return self

    @property
    def instance_id(self) -> int:
        return self.points[0].instance_id

    def as_array(self) -> np.ndarray:
        """Coordenadas (n, 2) na ordem (x, y)"""
        return np.array([[p.x, p.y] for p in self.points], dtype=np.float64)

    @classmethod
    def from_xy(cls, xs, ys, instance_id: int) -> "LaneInstance":
        return cls(
            points=[
                KeyPoint(x=float(x), y=float(y), instance_id=instance_id)
                for x, y in zip(xs, ys)
            ]
        )


class Sample(BaseModel):
    """Quadro de treinamento: imagem normalizada + faixas anotadas

    A imagem é guardada em HWC (256x512x3), convenção do OpenCV; a rede
    recebe a transposição CHW (ver ``services.images.to_tensor``).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray = Field(..., description="Imagem RGB float32 em [0,1]")
    lanes: List[LaneInstance] = Field(default_factory=list, description="Faixas (pode ser vazia)")
    source_id: str = Field(..., description="Identificador do quadro de origem")
    last_loss: float = Field(0.0, ge=0.0, description="Última perda observada (mineração de difíceis)")

    @field_validator("image", mode="before")
    @classmethod
    def _image(cls, v):
        image = np.asarray(v, dtype=np.float32)
        if image.shape != (IMAGE_HEIGHT, IMAGE_WIDTH, 3):
            raise ValueError(f"imagem deve ter formato (256, 512, 3), recebido {image.shape}")
        if image.size and (image.min() < 0.0 or image.max() > 1.0):
            raise ValueError("valores da imagem fora de [0,1]")
        return image


class DetectedPoint(BaseModel):
    """Ponto decodificado de uma célula acima do limiar de confiança"""

    x: float = Field(..., description="Coordenada x decodificada")
    y: float = Field(..., description="Coordenada y decodificada")
    confidence: float = Field(..., ge=0.0, le=1.0)
    embedding: List[float] = Field(..., min_length=EMBEDDING_DIM, max_length=EMBEDDING_DIM)
