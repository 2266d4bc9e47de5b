"""
Parâmetros declarativos: hiperparâmetros de perda/decodificação, arquitetura,
cenas sintéticas e configuração de treinamento
"""

from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from pinet.models.grid import CELL_SIZE
from pinet.utils.errors import ModelSpecError

AUGMENT_OPS = ("flip", "translate", "rotate", "add_noise", "intensity", "shadow")

# Limiares de confiança por profundidade (1H..4H) usados no TuSimple
TUSIMPLE_CONF_THRESHOLDS = (0.52, 0.30, 0.32, 0.35)
CULANE_CONF_THRESHOLDS = (0.97, 0.96, 0.95, 0.94)


def default_conf_thresholds(n_hourglass: int, benchmark: str = "tusimple") -> List[float]:
    """Limiares 1H..NH; profundidades além de 4 repetem o valor de 4H"""
    table = CULANE_CONF_THRESHOLDS if benchmark == "culane" else TUSIMPLE_CONF_THRESHOLDS
    return [table[min(i, len(table) - 1)] for i in range(n_hourglass)]


class HyperParams(BaseModel):
    """Pesos das perdas e limiares de decodificação"""

    gamma_e: float = Field(1.0, ge=0.0, description="Peso da perda de existência")
    gamma_n: float = Field(1.0, ge=0.0, description="Peso da perda de não-existência")
    gamma_o: float = Field(0.2, ge=0.0, description="Peso da perda de offset")
    gamma_f: float = Field(0.5, ge=0.0, description="Peso da perda de embedding")
    gamma_d: float = Field(0.1, ge=0.0, description="Peso da perda de destilação")
    feature_margin: float = Field(1.0, gt=0.0, description="Margem K da perda de embedding")
    conf_threshold: float = Field(0.35, gt=0.0, lt=1.0, description="Limiar de confiança")
    cluster_distance: float = Field(0.08, gt=0.0, description="Distância de agrupamento")
    cell_size: Literal[8] = Field(CELL_SIZE, description="Pixels por célula (fixo)")
    detach_teacher: bool = Field(True, description="Bloquear gradiente do mapa do professor")
    min_cluster_size: int = Field(3, ge=1, description="Agrupamentos menores são ruído")
    smooth_lanes: bool = Field(True, description="Aplicar spline às faixas detectadas")
    smoothing_per_point: float = Field(1.0, ge=0.0, description="Fator de suavização por ponto (px²)")

    @model_validator(mode="after")
    def _margin(self):
        if self.cluster_distance >= self.feature_margin:
            raise ValueError("cluster_distance deve ser menor que a margem K")
        return self


class ModelSpec(BaseModel):
    """Descrição da rede de redimensionamento + N módulos hourglass"""

    n_hourglass: int = Field(4, ge=1, description="Número de módulos hourglass")
    feature_channels: int = Field(128, ge=1)
    bottleneck_mid_channels: int = Field(64, ge=1)
    confidence_channels: int = Field(1, ge=1)
    offset_channels: int = Field(2, ge=1)
    embedding_channels: int = Field(4, ge=1)

    def clipped(self, n: int) -> "ModelSpec":
        """Especificação com apenas os n primeiros módulos"""
        if not 1 <= n <= self.n_hourglass:
            raise ModelSpecError(f"n={n} fora de [1, {self.n_hourglass}]")
        return self.model_copy(update={"n_hourglass": n})


class SyntheticSceneConfig(BaseModel):
    """Cena sintética de estrada para treinamento em escala de bancada"""

    lane_count: Tuple[int, int] = Field((2, 4), description="Intervalo do número de faixas")
    curvature: Tuple[float, float] = Field((-30.0, 30.0), description="Curvatura máxima em pixels")
    perspective: float = Field(1.0, ge=0.0, le=1.0, description="0 = faixas paralelas, 1 = ponto de fuga")
    noise: float = Field(0.0, ge=0.0, le=1.0, description="Nível de ruído/textura do fundo")
    occlusion: float = Field(0.0, ge=0.0, le=1.0, description="Probabilidade de oclusão")
    strip_width: int = Field(6, ge=1, description="Largura da faixa pintada (px)")
    seed: int = Field(0, description="Semente do gerador")

    @field_validator("lane_count")
    @classmethod
    def _lane_count(cls, v):
        low, high = v
        if low < 0 or high < low or high > 6:
            raise ValueError("lane_count deve satisfazer 0 <= min <= max <= 6")
        return v

    @field_validator("curvature")
    @classmethod
    def _curvature(cls, v):
        if v[1] < v[0]:
            raise ValueError("curvature deve ser (min, max)")
        return v


class AugmentSettings(BaseModel):
    """Magnitudes das transformações de aumento de dados"""

    max_translation: float = Field(50.0, ge=0.0, description="Translação máxima (px)")
    max_rotation: float = Field(10.0, ge=0.0, description="Rotação máxima (graus)")
    shadow_range: Tuple[float, float] = Field((0.4, 1.0), description="Rampa multiplicativa da sombra")
    noise_amplitude: float = Field(0.05, ge=0.0, description="Ruído aditivo uniforme ±a")
    intensity_range: Tuple[float, float] = Field((0.7, 1.3), description="Fator de intensidade")


class TrainConfig(BaseModel):
    """Configuração de treinamento (arquivo CHAVE=VALOR)"""

    epochs: int = Field(300, ge=1)
    batch_size: int = Field(6, ge=1)
    learning_rate: float = Field(1e-4, gt=0.0)
    lr_plateau_factor: float = Field(0.5, gt=0.0, lt=1.0)
    lr_plateau_patience: int = Field(10, ge=0)

    gamma_e: float = Field(1.0, ge=0.0)
    gamma_e_late: float = Field(2.5, ge=0.0)
    gamma_e_switch_epoch: Optional[int] = Field(None, ge=0, description="Época da troca 1.0 -> 2.5")
    gamma_n: float = Field(1.0, ge=0.0)
    gamma_o: float = Field(0.2, ge=0.0)
    gamma_f: float = Field(0.5, ge=0.0)
    gamma_d: float = Field(0.1, ge=0.0)
    feature_margin: float = Field(1.0, gt=0.0)
    detach_teacher: bool = True

    n_hourglass: int = Field(4, ge=1)
    conf_thresholds: Optional[List[float]] = Field(None, description="Limiar por profundidade 1H..NH (padrão TuSimple)")
    cluster_distance: float = Field(0.08, gt=0.0, lt=1.0)

    seed: int = 0
    checkpoint_every: int = Field(10, ge=1)
    eval_every: int = Field(1, ge=1)
    val_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="0 = validar no próprio conjunto de treino")

    dataset: Literal["synthetic", "tusimple", "culane"] = "synthetic"
    dataset_path: Optional[Path] = None
    list_file: Optional[str] = Field(None, description="Lista de imagens do CULane (relativa a dataset_path)")
    synthetic_count: int = Field(32, ge=1)
    synthetic_noise: float = Field(0.0, ge=0.0, le=1.0)
    synthetic_occlusion: float = Field(0.0, ge=0.0, le=1.0)

    augment_ops: List[str] = Field(default_factory=list)
    hard_fraction: float = Field(0.3, ge=0.0, le=1.0)

    out_dir: Path = Path("runs/train")
    device: str = "cpu"
    num_workers: int = Field(0, ge=0)

    @field_validator("conf_thresholds", "augment_ops", mode="before")
    @classmethod
    def _split_list(cls, v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator("conf_thresholds")
    @classmethod
    def _thresholds(cls, v):
        if v is not None and any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("todos os limiares devem estar em (0,1)")
        return v

    @field_validator("augment_ops")
    @classmethod
    def _ops(cls, v):
        unknown = sorted(set(v) - set(AUGMENT_OPS))
        if unknown:
            raise ValueError(f"operações desconhecidas: {unknown}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.conf_thresholds is None:
            self.conf_thresholds = default_conf_thresholds(self.n_hourglass)
        if len(self.conf_thresholds) != self.n_hourglass:
            raise ValueError(
                f"conf_thresholds precisa de {self.n_hourglass} valores (1H..{self.n_hourglass}H)"
            )
        if self.dataset != "synthetic":
            if self.dataset_path is None or not self.dataset_path.exists():
                raise ValueError(f"dataset_path inexistente: {self.dataset_path}")
            if self.dataset == "culane" and not self.list_file:
                raise ValueError("list_file é obrigatório para o CULane")
        return self

    def gamma_e_at(self, epoch: int) -> float:
        """Peso de existência na época (troca para gamma_e_late no fim)"""
        if self.gamma_e_switch_epoch is not None and epoch >= self.gamma_e_switch_epoch:
            return self.gamma_e_late
        return self.gamma_e

    def hyper_params(self, epoch: int = 0) -> HyperParams:
        return HyperParams(
            gamma_e=self.gamma_e_at(epoch),
            gamma_n=self.gamma_n,
            gamma_o=self.gamma_o,
            gamma_f=self.gamma_f,
            gamma_d=self.gamma_d,
            feature_margin=self.feature_margin,
            conf_threshold=self.conf_thresholds[-1],
            cluster_distance=self.cluster_distance,
            detach_teacher=self.detach_teacher,
        )
