"""
Rede de redimensionamento + módulos hourglass empilhados com três ramos de saída

Cada módulo produz confiança (1 canal), offset (2) e embedding (4) sobre a
grade 32x64; a confiança é repassada ao módulo seguinte. O terceiro bottleneck
"same" do codificador é a camada de destilação.
"""

import copy
from dataclasses import dataclass, field
from typing import List, Literal, Optional

import numpy as np
import torch
import torch.nn as nn

from pinet.models.grid import PredictionGrid
from pinet.models.params import ModelSpec
from pinet.utils.errors import ModelSpecError

BottleneckKind = Literal["same", "down", "up"]

DEPTH = 4
DISTILLATION_TAP = 2
_CONFIDENCE_PRIOR_BIAS = -2.0


class ConvBlock(nn.Sequential):
    """Conv + PReLU + BatchNorm (ordem das tabelas da arquitetura)"""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, stride: int = 1):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride, padding=kernel_size // 2),
            nn.PReLU(),
            nn.BatchNorm2d(out_channels),
        )


class Bottleneck(nn.Module):
    """1x1 -> 3x3 (same / stride 2 / transposta stride 2) -> 1x1 com atalho residual"""

    def __init__(self, channels: int, mid_channels: int, kind: BottleneckKind = "same"):
        super().__init__()
        self.kind = kind
        self.reduce = ConvBlock(channels, mid_channels, 1)
        if kind == "down":
            spatial = nn.Conv2d(mid_channels, mid_channels, 3, stride=2, padding=1)
        elif kind == "up":
            spatial = nn.ConvTranspose2d(mid_channels, mid_channels, 3, stride=2, padding=1, output_padding=1)
        else:
            spatial = nn.Conv2d(mid_channels, mid_channels, 3, stride=1, padding=1)
        self.spatial = nn.Sequential(spatial, nn.PReLU(), nn.BatchNorm2d(mid_channels))
        self.expand = nn.Sequential(nn.Conv2d(mid_channels, channels, 1), nn.BatchNorm2d(channels))

        if kind == "down":
            self.skip = nn.Sequential(nn.Conv2d(channels, channels, 1, stride=2), nn.BatchNorm2d(channels))
        elif kind == "up":
            self.skip = nn.Sequential(
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(channels, channels, 1),
                nn.BatchNorm2d(channels),
            )
        else:
            self.skip = nn.Identity()
        self.activation = nn.PReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.activation(self.expand(self.spatial(self.reduce(x))) + self.skip(x))


class OutputBranch(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            ConvBlock(in_channels, 64, 3),
            ConvBlock(64, 32, 3),
            nn.Conv2d(32, out_channels, 1),
        )


@dataclass
class ModuleOutput:
    """Saídas de um módulo para o lote inteiro (B, C, 32, 64)"""

    confidence: torch.Tensor
    offset: torch.Tensor
    embedding: torch.Tensor
    activation: torch.Tensor

    def prediction_grid(self, index: int = 0) -> PredictionGrid:
        return PredictionGrid(
            confidence=self.confidence[index, 0].detach().cpu().double().numpy(),
            offset=self.offset[index].detach().cpu().double().numpy(),
            embedding=self.embedding[index].detach().cpu().double().numpy(),
        )


@dataclass
class ModuleOutputs:
    """Uma saída por módulo ativo, na ordem de profundidade"""

    modules: List[ModuleOutput] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.modules)

    def __getitem__(self, index: int) -> ModuleOutput:
        return self.modules[index]

    @property
    def activations(self) -> List[torch.Tensor]:
        return [m.activation for m in self.modules]

    def prediction_grids(self, index: int = 0) -> List[PredictionGrid]:
        return [m.prediction_grid(index) for m in self.modules]


class HourglassModule(nn.Module):
    """Codificador (4 down + 4 same), decodificador (4 up) e três ramos

    A partir do segundo módulo, `from_previous` projeta as features e a
    confiança do módulo anterior na entrada deste.
    """

    def __init__(self, spec: ModelSpec, receives_previous: bool = False):
        super().__init__()
        c, mid = spec.feature_channels, spec.bottleneck_mid_channels
        self.down = nn.ModuleList([Bottleneck(c, mid, "down") for _ in range(DEPTH)])
        self.same = nn.ModuleList([Bottleneck(c, mid, "same") for _ in range(DEPTH)])
        self.up = nn.ModuleList([Bottleneck(c, mid, "up") for _ in range(DEPTH)])
        self.confidence = OutputBranch(c, spec.confidence_channels)
        self.offset = OutputBranch(c, spec.offset_channels)
        self.embedding = OutputBranch(c, spec.embedding_channels)
        self.from_previous = nn.Conv2d(c + spec.confidence_channels, c, 1) if receives_previous else None

    def forward(self, x: torch.Tensor):
        skips = [x]
        out = x
        for layer in self.down:
            out = layer(out)
            skips.append(out)
        activation = None
        for i, layer in enumerate(self.same):
            out = layer(out)
            if i == DISTILLATION_TAP:
                activation = out
        skips.pop()
        for layer in self.up:
            out = layer(out) + skips.pop()

        result = ModuleOutput(
            confidence=torch.sigmoid(self.confidence(out)),
            offset=torch.sigmoid(self.offset(out)),
            embedding=self.embedding(out),
            activation=activation,
        )
        return result, out

    def input_from(self, features: torch.Tensor, confidence: torch.Tensor) -> torch.Tensor:
        return self.from_previous(torch.cat([features, confidence], dim=1))


def build_resizing_network() -> nn.Sequential:
    """3x256x512 -> 128x32x64 com três convoluções stride 2"""
    return nn.Sequential(ConvBlock(3, 32, 3, 2), ConvBlock(32, 64, 3, 2), ConvBlock(64, 128, 3, 2))


def build_hourglass_module(spec: Optional[ModelSpec] = None, receives_previous: bool = False) -> HourglassModule:
    return HourglassModule(spec or ModelSpec(), receives_previous)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)):
        nn.init.kaiming_normal_(module.weight, a=0.25, mode="fan_in", nonlinearity="leaky_relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class PINet(nn.Module):
    """Preditor de pontos-chave com N módulos hourglass recortáveis"""

    def __init__(self, spec: Optional[ModelSpec] = None):
        super().__init__()
        self.spec = spec or ModelSpec()
        self.resizing = build_resizing_network()
        self.hourglass = nn.ModuleList(
            [build_hourglass_module(self.spec, receives_previous=m > 0) for m in range(self.spec.n_hourglass)]
        )
        self.apply(_init_weights)
        for module in self.hourglass:
            nn.init.constant_(module.confidence[-1].bias, _CONFIDENCE_PRIOR_BIAS)

    @property
    def n_hourglass(self) -> int:
        return len(self.hourglass)

    def forward(self, images: torch.Tensor, n_active: Optional[int] = None) -> ModuleOutputs:
        n_active = self.n_hourglass if n_active is None else n_active
        if not 1 <= n_active <= self.n_hourglass:
            raise ModelSpecError(f"n_active={n_active} fora de [1, {self.n_hourglass}]")

        x = self.resizing(images)
        outputs = ModuleOutputs()
        for m, module in enumerate(self.hourglass[:n_active]):
            if m > 0:
                x = module.input_from(features, result.confidence)
            result, features = module(x)
            outputs.modules.append(result)
        return outputs


def clip(model: PINet, n: int) -> PINet:
    """Manter a rede de redimensionamento e os n primeiros módulos, sem retreino"""
    spec = model.spec.clipped(n)
    clipped = copy.deepcopy(model)
    clipped.hourglass = clipped.hourglass[:n]
    clipped.spec = spec
    return clipped


def count_parameters(model: nn.Module) -> int:
    return int(sum(p.numel() for p in model.parameters()))


def predict(model: PINet, images: np.ndarray | torch.Tensor, n_active: Optional[int] = None) -> ModuleOutputs:
    """Inferência em modo de avaliação, sem gradiente"""
    model.eval()
    batch = torch.as_tensor(images, dtype=torch.float32)
    if batch.dim() == 3:
        batch = batch.unsqueeze(0)
    device = next(model.parameters()).device
    with torch.no_grad():
        return model(batch.to(device), n_active)
