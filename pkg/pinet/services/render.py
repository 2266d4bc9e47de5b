"""
Visualização: pontos e curvas sobrepostos ao quadro, gráfico do histórico
"""

from pathlib import Path
from typing import Optional, Sequence

import cv2
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import structlog  # noqa: E402

from pinet.models.lane import DetectedPoint, LaneInstance  # noqa: E402

logger = structlog.get_logger(__name__)

# BGR, uma cor por instância (cicla quando há mais faixas)
LANE_COLORS = (
    (0, 0, 255),
    (0, 255, 0),
    (255, 0, 0),
    (0, 255, 255),
    (255, 0, 255),
    (255, 255, 0),
    (0, 128, 255),
    (255, 128, 0),
)


def lane_color(instance_id: int):
    return LANE_COLORS[(instance_id - 1) % len(LANE_COLORS)]


def render_overlay(
    image: np.ndarray,
    lanes: Sequence[LaneInstance],
    points: Optional[Sequence[DetectedPoint]] = None,
    scale: tuple = (1.0, 1.0),
) -> np.ndarray:
    """Desenhar pontos-chave (cinza) e a curva ajustada de cada faixa em BGR uint8

    `image` é RGB, float em [0,1] ou uint8; `scale` leva as coordenadas
    de 512x256 para o tamanho da imagem.
    """
    rgb = np.asarray(image)
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    canvas = cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)
    sx, sy = scale

    for p in points or ():
        cv2.circle(canvas, (int(round(p.x * sx)), int(round(p.y * sy))), 2, (200, 200, 200), -1, cv2.LINE_AA)

    for lane in lanes:
        color = lane_color(lane.instance_id)
        pts = np.round(lane.as_array() * np.array([sx, sy])).astype(np.int32)
        cv2.polylines(canvas, [pts], False, color, 2, cv2.LINE_AA)
        for x, y in pts:
            cv2.circle(canvas, (int(x), int(y)), 3, color, -1, cv2.LINE_AA)
    return canvas


def write_overlay(path: Path | str, overlay: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), overlay)
    return path


def plot_history(records: Sequence[dict], out_path: Path | str) -> Path:
    """Termos de perda por passo e accuracy de validação por profundidade a cada época"""
    epochs = [r for r in records if r.get("kind") == "epoch"]
    steps = [r for r in records if r.get("kind") == "step"]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(12, 4.5))
    for term in ("total", "exist", "non_exist", "offset", "feature", "distillation"):
        series = [(r["step"], r[term]) for r in steps if term in r]
        if series:
            x, y = zip(*series)
            ax_loss.plot(x, y, label=term, linewidth=1.0 if term != "total" else 1.8)
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)

    depths = sorted({n for r in epochs for n in r.get("validation", {})}, key=int)
    for n in depths:
        series = [(r["epoch"], r["validation"][n]["accuracy"]) for r in epochs if n in r.get("validation", {})]
        x, y = zip(*series)
        ax_acc.plot(x, y, marker="o", markersize=3, label=f"{n}H")
    switches = [b["epoch"] for a, b in zip(epochs, epochs[1:]) if a["gamma_e"] != b["gamma_e"]]
    for epoch in switches:
        ax_acc.axvline(epoch, color="gray", linestyle="--", linewidth=0.8)
    ax_acc.set_ylim(0.0, 1.0)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    if depths:
        ax_acc.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    logger.info("history_plotted", path=str(out_path), epochs=len(epochs), steps=len(steps))
    return out_path
