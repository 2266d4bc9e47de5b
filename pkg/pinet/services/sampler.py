"""
Amostragem de lotes com mineração de amostras difíceis
"""

import math
from typing import List, Sequence

import numpy as np
import structlog

from pinet.models.lane import Sample
from pinet.utils.errors import SamplingError

logger = structlog.get_logger(__name__)

HARD_POOL_FRACTION = 0.1


def sample_batch(
    pool: Sequence[Sample],
    batch_size: int = 6,
    hard_fraction: float = 0.3,
    rng: np.random.Generator | None = None,
) -> List[Sample]:
    """Sortear um lote sem reposição; `hard_fraction` dele vem do decil de maior perda

    A amostra de maior `last_loss` entra sempre que há vaga difícil; as demais
    vagas difíceis são sorteadas no restante do decil.
    """
    if not pool:
        raise SamplingError("pool vazio")
    if not 0.0 <= hard_fraction <= 1.0:
        raise SamplingError(f"hard_fraction={hard_fraction} fora de [0,1]")
    if batch_size > len(pool):
        raise SamplingError(f"batch_size={batch_size} maior que o pool ({len(pool)})")
    rng = rng or np.random.default_rng()

    losses = np.array([s.last_loss for s in pool], dtype=np.float64)
    hard_pool_size = max(1, math.ceil(HARD_POOL_FRACTION * len(pool)))
    # empates na perda (ex: início do treino) são desfeitos ao acaso
    order = rng.permutation(len(pool))
    hard_indices = order[np.argsort(-losses[order], kind="stable")][:hard_pool_size]

    n_hard = min(int(round(hard_fraction * batch_size)), hard_pool_size)
    # a de maior perda ocupa sempre a primeira vaga difícil
    chosen = [int(hard_indices[0])] if n_hard else []
    if n_hard > 1:
        chosen += [int(i) for i in rng.choice(hard_indices[1:], size=n_hard - 1, replace=False)]

    remaining = np.setdiff1d(np.arange(len(pool)), chosen)
    chosen += [int(i) for i in rng.choice(remaining, size=batch_size - n_hard, replace=False)]
    return [pool[int(i)] for i in chosen]


class HardSampleMiner:
    """Estado do amostrador: gerador e atualização de last_loss

    Só o coordenador de treinamento deve chamar estes métodos.
    """

    def __init__(self, hard_fraction: float = 0.3, seed: int = 0):
        self.hard_fraction = hard_fraction
        self.rng = np.random.default_rng(seed)

    def sample_batch(self, pool: Sequence[Sample], batch_size: int = 6) -> List[Sample]:
        return sample_batch(pool, batch_size, self.hard_fraction, self.rng)

    def update_losses(self, samples: Sequence[Sample], losses: Sequence[float]) -> None:
        for sample, loss in zip(samples, losses):
            sample.last_loss = max(float(loss), 0.0)
