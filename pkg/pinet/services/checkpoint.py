"""
Arquivos de checkpoint: parâmetros nomeados + ModelSpec

O recorte opera só sobre o arquivo (dicionário), sem construir a rede,
para que a implantação não dependa do código de treinamento.
"""

import pickle
import re
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import structlog
import torch

from pinet.models.params import ModelSpec
from pinet.services.network import PINet
from pinet.utils.errors import ModelSpecError

logger = structlog.get_logger(__name__)

FORMAT = "pinet-checkpoint-v1"
_MODULE_KEY = re.compile(r"^hourglass\.(\d+)\.")


def make_archive(
    model: PINet,
    optimizer: Optional[torch.optim.Optimizer] = None,
    epoch: int = 0,
    step: int = 0,
    scheduler: Optional[Any] = None,
) -> Dict[str, Any]:
    archive = {
        "format": FORMAT,
        "spec": model.spec.model_dump(),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "epoch": epoch,
        "step": step,
    }
    if optimizer is not None:
        archive["optimizer"] = optimizer.state_dict()
    if scheduler is not None:
        archive["scheduler"] = scheduler.state_dict()
    return archive


def save_checkpoint(path: Path | str, model: PINet, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return write_archive(path, make_archive(model, **kwargs))


def write_archive(path: Path | str, archive: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(archive, path)
    logger.info("checkpoint_saved", path=str(path), modules=archive["spec"]["n_hourglass"])
    return path


def read_archive(path: Path | str) -> Dict[str, Any]:
    try:
        archive = torch.load(Path(path), map_location="cpu", weights_only=True)
    except (pickle.UnpicklingError, RuntimeError, EOFError, ValueError, KeyError) as e:
        raise ModelSpecError(f"{path} não pôde ser lido como checkpoint: {e}") from e
    if not isinstance(archive, dict) or archive.get("format") != FORMAT:
        raise ModelSpecError(f"{path} não é um checkpoint {FORMAT}")
    return archive


def model_from_archive(archive: Dict[str, Any], device: str | torch.device = "cpu") -> PINet:
    model = PINet(ModelSpec(**archive["spec"]))
    model.load_state_dict(archive["state_dict"])
    return model.to(device)


def load_checkpoint(path: Path | str, device: str | torch.device = "cpu") -> Tuple[PINet, Dict[str, Any]]:
    archive = read_archive(path)
    return model_from_archive(archive, device), archive


def clip_checkpoint(archive: Dict[str, Any], n: int) -> Dict[str, Any]:
    """Arquivo com os n primeiros módulos (estado do otimizador é descartado)"""
    spec = ModelSpec(**archive["spec"]).clipped(n)
    state = {}
    for key, value in archive["state_dict"].items():
        match = _MODULE_KEY.match(key)
        if match and int(match.group(1)) >= n:
            continue
        state[key] = value
    return {
        "format": FORMAT,
        "spec": spec.model_dump(),
        "state_dict": state,
        "epoch": archive.get("epoch", 0),
        "step": archive.get("step", 0),
    }


def archive_parameter_count(archive: Dict[str, Any]) -> int:
    """Parâmetros treináveis do arquivo (exclui estatísticas de BatchNorm)"""
    return int(
        sum(
            v.numel()
            for k, v in archive["state_dict"].items()
            if not k.endswith(("running_mean", "running_var", "num_batches_tracked"))
        )
    )
