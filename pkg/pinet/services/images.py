"""
Leitura e normalização de imagens de entrada
"""

from pathlib import Path
from typing import Sequence, Tuple

import cv2
import numpy as np
import torch

from pinet.models.grid import IMAGE_HEIGHT, IMAGE_WIDTH
from pinet.utils.errors import ImageReadError


def read_image(path: Path | str) -> np.ndarray:
    """Ler imagem RGB uint8 do disco"""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise ImageReadError(path)
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def ingest_image(image: np.ndarray | Path | str) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Redimensionar para 512x256 e normalizar para [0,1]

    Retorna a imagem HWC float32 e o tamanho de origem (largura, altura).
    """
    rgb = read_image(image) if isinstance(image, (str, Path)) else np.asarray(image)
    height, width = rgb.shape[:2]
    if (width, height) != (IMAGE_WIDTH, IMAGE_HEIGHT):
        rgb = cv2.resize(rgb, (IMAGE_WIDTH, IMAGE_HEIGHT), interpolation=cv2.INTER_AREA)
    if rgb.dtype == np.uint8:
        normalized = rgb.astype(np.float32) / 255.0
    else:
        normalized = np.clip(rgb.astype(np.float32), 0.0, 1.0)
    return normalized, (width, height)


def write_image(path: Path | str, image: np.ndarray) -> None:
    """Gravar imagem RGB float [0,1] como PNG/JPG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rgb8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    cv2.imwrite(str(path), cv2.cvtColor(rgb8, cv2.COLOR_RGB2BGR))


def to_tensor(images: Sequence[np.ndarray], device: str | torch.device = "cpu") -> torch.Tensor:
    """Lote HWC -> tensor (B, 3, 256, 512)"""
    batch = np.stack([np.asarray(img, dtype=np.float32) for img in images]).transpose(0, 3, 1, 2)
    return torch.from_numpy(np.ascontiguousarray(batch)).to(device)
