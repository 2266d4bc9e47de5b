"""
Configurações do PINet (detecção de faixas por pontos-chave)
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from pinet.models.params import TrainConfig
from pinet.utils.errors import ConfigError

load_dotenv()


def _optional_float(name: str) -> Optional[float]:
    value = os.getenv(name)
    return float(value) if value else None


class Settings:
    """Configurações da aplicação"""

    def __init__(self):
        # Configurações gerais
        self.app_name = os.getenv("APP_NAME", "PINet Lane Detector")
        self.app_version = os.getenv("APP_VERSION", "1.0.0")
        self.debug = os.getenv("DEBUG", "false").lower() == "true"

        # Configurações de logging
        self.log_level = os.getenv("PINET_LOG_LEVEL", "info")
        self.log_json = os.getenv("PINET_LOG_JSON", "false").lower() == "true"

        # Configurações de execução
        self.device = os.getenv("PINET_DEVICE", "cpu")
        self.num_workers = int(os.getenv("PINET_NUM_WORKERS", "0"))
        self.output_dir = Path(os.getenv("PINET_OUTPUT_DIR", "runs"))

        # Configurações de decodificação; sem limiar usa o padrão da profundidade
        self.conf_threshold = _optional_float("PINET_CONF_THRESHOLD")
        self.cluster_distance = float(os.getenv("PINET_CLUSTER_DISTANCE", "0.08"))


def load_train_config(path: Path | str, **overrides) -> TrainConfig:
    """Ler um arquivo CHAVE=VALOR de treinamento

    Chaves sem distinção de maiúsculas; valores vazios são ignorados e
    `overrides` (ex: argumentos de linha de comando) têm precedência.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"arquivo de configuração inexistente: {path}", ["config"])

    values = {key.strip().lower(): value for key, value in dotenv_values(path).items() if value not in (None, "")}
    unknown = sorted(set(values) - set(TrainConfig.model_fields))
    if unknown:
        raise ConfigError(f"chaves desconhecidas em {path}: {', '.join(unknown)}", unknown)

    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**values)
    except ValidationError as e:
        fields = [".".join(str(part) for part in err["loc"]) or "config" for err in e.errors()]
        details = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"configuração inválida ({path}): {details}", fields) from e


# Instância global das configurações
settings = Settings()
