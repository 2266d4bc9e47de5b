"""
Perdas de treinamento: existência, não-existência, offset, embedding e destilação

Todas recebem tensores de lote e devolvem um valor por amostra (B,),
somando sobre as células da grade de cada quadro.
"""

from typing import Dict, List, NamedTuple, Sequence

import torch
import torch.nn.functional as F

from pinet.models.params import HyperParams
from pinet.models.report import LossBreakdown
from pinet.services.network import ModuleOutputs
from pinet.utils.errors import ShapeMismatchError

NON_EXIST_FLOOR = 0.01
NON_EXIST_REGULARIZER = 1e-5


def _grid(values: torch.Tensor) -> torch.Tensor:
    """(B,1,H,W) -> (B,H,W)"""
    return values[:, 0] if values.dim() == 4 else values


def _check(name: str, pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"{name}: predição {tuple(pred.shape)} vs alvo {tuple(target.shape)}")


def exist_loss(confidence: torch.Tensor, exist: torch.Tensor) -> torch.Tensor:
    """Média de (1 - c_c)^2 nas células com ponto-chave; 0 quando N_e = 0"""
    conf = _grid(confidence)
    _check("exist", conf, exist)
    mask = (exist > 0).to(conf.dtype)
    n_exist = mask.sum(dim=(1, 2)).clamp(min=1.0)
    return (((1.0 - conf) ** 2) * mask).sum(dim=(1, 2)) / n_exist


def non_exist_loss(confidence: torch.Tensor, exist: torch.Tensor) -> torch.Tensor:
    """Fundo com c_c > 0.01 normalizado por N_n, mais regularizador 1e-5 em todo o fundo"""
    conf = _grid(confidence)
    _check("non_exist", conf, exist)
    background = (exist <= 0).to(conf.dtype)
    n_background = background.sum(dim=(1, 2)).clamp(min=1.0)
    active = background * (conf > NON_EXIST_FLOOR).to(conf.dtype)
    squared = conf ** 2
    main = (squared * active).sum(dim=(1, 2)) / n_background
    return main + NON_EXIST_REGULARIZER * (squared * background).sum(dim=(1, 2))


def offset_loss(offset: torch.Tensor, offset_x: torch.Tensor, offset_y: torch.Tensor, exist: torch.Tensor) -> torch.Tensor:
    """Erro quadrático médio de (c_x, c_y) apenas nas células com ponto-chave"""
    _check("offset_x", offset[:, 0], offset_x)
    _check("offset_y", offset[:, 1], offset_y)
    mask = (exist > 0).to(offset.dtype)
    n_exist = mask.sum(dim=(1, 2)).clamp(min=1.0)
    err_x = ((offset_x.to(offset.dtype) - offset[:, 0]) ** 2 * mask).sum(dim=(1, 2))
    err_y = ((offset_y.to(offset.dtype) - offset[:, 1]) ** 2 * mask).sum(dim=(1, 2))
    return (err_x + err_y) / n_exist


def pairwise_feature_loss(features: torch.Tensor, ids: torch.Tensor, margin: float) -> torch.Tensor:
    """Soma sobre pares ordenados (i, j), inclusive i = j, dividida por N_e^2"""
    n = features.shape[0]
    if n == 0:
        return features.sum() * 0.0
    diff = features[:, None, :] - features[None, :, :]
    squared = (diff ** 2).sum(dim=-1)
    # pares coincidentes (incluindo i = j) têm distância 0 e gradiente 0
    coincident = squared <= 0
    safe = torch.where(coincident, torch.ones_like(squared), squared)
    distance = torch.where(coincident, torch.zeros_like(squared), torch.sqrt(safe))
    same = ids[:, None] == ids[None, :]
    pair_loss = torch.where(same, distance, F.relu(margin - distance))
    return pair_loss.sum() / float(n * n)


def feature_loss(embedding: torch.Tensor, instance: torch.Tensor, margin: float = 1.0) -> torch.Tensor:
    """Aproxima embeddings da mesma faixa e afasta (até K) os de faixas diferentes"""
    _check("feature", embedding[:, 0], instance)
    losses = []
    for b in range(embedding.shape[0]):
        mask = instance[b] > 0
        features = embedding[b][:, mask].transpose(0, 1)
        losses.append(pairwise_feature_loss(features, instance[b][mask], margin))
    return torch.stack(losses)


def attention_energy(activation: torch.Tensor) -> torch.Tensor:
    """G(A) = soma nos canais de |A|^2, achatado em (B, H*W)"""
    return (activation.abs() ** 2).sum(dim=1).flatten(1)


def spatial_softmax(energy: torch.Tensor) -> torch.Tensor:
    return torch.softmax(energy, dim=1)


def attention_maps(activations: Sequence[torch.Tensor]) -> List[torch.Tensor]:
    return [spatial_softmax(attention_energy(a)) for a in activations]


def distillation_loss(activations: Sequence[torch.Tensor], detach_teacher: bool = True) -> torch.Tensor:
    """Soma dos quadrados entre o mapa de atenção do módulo mais profundo e os demais"""
    if len(activations) < 2:
        reference = activations[0] if activations else torch.zeros(1)
        return reference.new_zeros(reference.shape[0])
    for a in activations[1:]:
        _check("distillation", a, activations[0])
    maps = attention_maps(activations)
    teacher = maps[-1].detach() if detach_teacher else maps[-1]
    return torch.stack([((teacher - student) ** 2).sum(dim=1) for student in maps[:-1]]).sum(dim=0)


def attention_distance(outputs: ModuleOutputs, student: int = 0) -> float:
    """Distância entre o mapa de atenção de um módulo raso e o do mais profundo"""
    maps = attention_maps(outputs.activations)
    return float(((maps[-1] - maps[student]) ** 2).sum(dim=1).mean())


class TotalLoss(NamedTuple):
    total: torch.Tensor
    breakdown: LossBreakdown
    per_sample: torch.Tensor


def module_losses(module, targets: Dict[str, torch.Tensor], hp: HyperParams) -> Dict[str, torch.Tensor]:
    exist = targets["exist"]
    return {
        "exist": exist_loss(module.confidence, exist),
        "non_exist": non_exist_loss(module.confidence, exist),
        "offset": offset_loss(module.offset, targets["offset_x"], targets["offset_y"], exist),
        "feature": feature_loss(module.embedding, targets["instance"], hp.feature_margin),
    }


def total_loss(outputs: ModuleOutputs, targets: Dict[str, torch.Tensor], hp: HyperParams) -> TotalLoss:
    """Soma ponderada das perdas de todos os módulos + destilação"""
    if len(outputs) == 0:
        raise ValueError("outputs vazio")
    weights = {"exist": hp.gamma_e, "non_exist": hp.gamma_n, "offset": hp.gamma_o, "feature": hp.gamma_f}

    sums = {name: 0.0 for name in weights}
    per_sample = None
    for module in outputs.modules:
        terms = module_losses(module, targets, hp)
        for name, value in terms.items():
            sums[name] = sums[name] + value.mean()
        per_sample = sum(weights[name] * terms[name] for name in weights)

    distillation = distillation_loss(outputs.activations, hp.detach_teacher).mean()
    total = sum(weights[name] * sums[name] for name in weights) + hp.gamma_d * distillation

    # valores não finitos ficam sem validação; o treinador decide abortar
    make = LossBreakdown if torch.isfinite(total) else LossBreakdown.model_construct
    breakdown = make(
        exist=float(sums["exist"]),
        non_exist=float(sums["non_exist"]),
        offset=float(sums["offset"]),
        feature=float(sums["feature"]),
        distillation=float(distillation),
        total=float(total),
    )
    return TotalLoss(total=total, breakdown=breakdown, per_sample=per_sample.detach())
