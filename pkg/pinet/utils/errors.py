"""
Hierarquia de exceções do PINet
"""

from pathlib import Path
from typing import Optional, Sequence


class PINetError(Exception):
    """Erro base de todo o pacote"""


class ConfigError(PINetError):
    """Configuração inválida (arquivo ou argumentos)"""

    def __init__(self, message: str, fields: Sequence[str] = ()):
        super().__init__(message)
        self.fields = list(fields)


class LabelError(PINetError):
    """Anotação de faixa inválida (poucos pontos, ponto fora do quadro)"""


class LabelParseError(LabelError):
    """Registro de anotação malformado"""

    def __init__(self, field: str, message: str, source: Optional[str] = None):
        where = f" ({source})" if source else ""
        super().__init__(f"campo '{field}': {message}{where}")
        self.field = field
        self.source = source


class ImageReadError(PINetError, OSError):
    """Imagem ausente ou ilegível"""

    def __init__(self, path: Path | str):
        super().__init__(f"não foi possível ler a imagem: {path}")
        self.path = Path(path)


class GridBoundsError(PINetError, IndexError):
    """Índice de célula fora da grade 32x64"""


class ShapeMismatchError(PINetError, ValueError):
    """Formatos de predição e ground truth incompatíveis"""


class ModelSpecError(PINetError, ValueError):
    """Número de módulos hourglass fora do intervalo"""


class SamplingError(PINetError, ValueError):
    """Lote maior que o pool ou fração inválida"""


class MetricInputError(PINetError, ValueError):
    """Entradas de avaliação inconsistentes (ex: y-samples diferentes)"""


class FrameSetMismatch(PINetError):
    """Conjuntos de quadros de predição e ground truth não coincidem"""

    def __init__(self, missing: Sequence[str]):
        shown = ", ".join(sorted(missing)[:20])
        super().__init__(f"{len(missing)} quadro(s) sem correspondência: {shown}")
        self.missing = sorted(missing)


class TrainingAborted(PINetError):
    """Perda não finita durante o treinamento"""

    def __init__(self, message: str, snapshot: Optional[Path] = None):
        super().__init__(message)
        self.snapshot = snapshot
