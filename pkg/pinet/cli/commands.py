"""
Comandos de linha de comando: train, infer, eval, clip, synth e plot

Cada comando devolve um código de saída; as exceções dos serviços são
convertidas aqui (2 configuração/argumento, 3 treinamento abortado,
4 nada processado, 5 quadros sem correspondência).
"""

import time
from pathlib import Path
from typing import List, Optional

import structlog
from pydantic import ValidationError

from pinet.config import load_train_config, settings
from pinet.models.params import HyperParams, SyntheticSceneConfig, TrainConfig, default_conf_thresholds
from pinet.services.checkpoint import archive_parameter_count, clip_checkpoint, load_checkpoint, read_archive, write_archive
from pinet.services.datasets import default_h_samples, tusimple_record, write_culane_lines, write_tusimple_labels
from pinet.services.images import ingest_image, to_tensor
from pinet.services.metrics import (
    culane_score,
    format_report,
    pair_frames,
    read_culane_categories,
    read_culane_frames,
    read_tusimple_frames,
    tusimple_score,
    write_report,
)
from pinet.services.network import predict
from pinet.services.postprocess import detect_with_points
from pinet.services.render import plot_history, render_overlay, write_overlay
from pinet.services.synthetic import persist_synthetic
from pinet.services.trainer import LAST_CHECKPOINT, load_dataset, read_history, train
from pinet.utils.errors import (
    ConfigError,
    FrameSetMismatch,
    ImageReadError,
    MetricInputError,
    ModelSpecError,
    PINetError,
    SamplingError,
    TrainingAborted,
)

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_NOTHING_PROCESSED = 4
EXIT_FRAME_MISMATCH = 5

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp")
PREDICTIONS_FILE = "predictions.json"
REPORT_FILE = "eval_report.txt"


def _revalidate(config: TrainConfig, **updates) -> TrainConfig:
    try:
        return TrainConfig.model_validate({**config.model_dump(), **updates})
    except ValidationError as e:
        fields = [".".join(str(p) for p in err["loc"]) or "config" for err in e.errors()]
        raise ConfigError(f"configuração inválida: {e.errors()[0]['msg']}", fields) from e


def cmd_train(
    config_path: Path | str,
    resume: Optional[Path | str] = None,
    seed: Optional[int] = None,
    out: Optional[Path | str] = None,
    n_modules: Optional[int] = None,
    conf_threshold: Optional[float] = None,
    cluster_threshold: Optional[float] = None,
) -> int:
    """Treinar a partir de um arquivo CHAVE=VALOR; grava checkpoints e histórico"""
    logger.info("command_started", command="train", config=str(config_path), version=settings.app_version)
    try:
        config = load_train_config(config_path, seed=seed, out_dir=out, cluster_distance=cluster_threshold)
        if n_modules is not None:
            thresholds = config.conf_thresholds
            thresholds = thresholds[:n_modules] if len(thresholds) >= n_modules else default_conf_thresholds(n_modules)
            config = _revalidate(config, n_hourglass=n_modules, conf_thresholds=thresholds)
        if conf_threshold is not None:
            config = _revalidate(config, conf_thresholds=[conf_threshold] * config.n_hourglass)

        checkpoint = None
        if resume is not None:
            checkpoint = Path(config.out_dir) / LAST_CHECKPOINT if str(resume) == "last" else Path(resume)
            if not checkpoint.is_file():
                raise ConfigError(f"checkpoint para retomar inexistente: {checkpoint}", ["resume"])

        dataset = load_dataset(config)
        result = train(config, dataset, resume=checkpoint)
    except (ConfigError, ModelSpecError, SamplingError, OSError) as e:
        logger.error("invalid_configuration", error=str(e), fields=getattr(e, "fields", []))
        return EXIT_CONFIG
    except TrainingAborted as e:
        logger.error("training_aborted", error=str(e), snapshot=str(e.snapshot))
        return EXIT_ABORTED

    logger.info("command_finished", command="train", checkpoint=str(result.checkpoint), steps=len(result.history))
    return EXIT_OK


def _list_images(image_dir: Path) -> List[Path]:
    if not image_dir.is_dir():
        return []
    return sorted(p for p in image_dir.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)


def cmd_infer(
    checkpoint: Path | str,
    image_dir: Path | str,
    n_modules: Optional[int] = None,
    out_dir: Optional[Path | str] = None,
    conf_threshold: Optional[float] = None,
    cluster_threshold: Optional[float] = None,
    overlay: bool = False,
    output_format: str = "tusimple",
    labels: Optional[Path | str] = None,
) -> int:
    """Detectar faixas em cada imagem do diretório e gravar no formato de submissão

    Com `labels` (arquivo de rótulos TuSimple), cada quadro usa os h_samples
    do seu registro em vez da grade padrão.
    """
    image_dir = Path(image_dir)
    out_dir = Path(out_dir) if out_dir is not None else settings.output_dir / "infer"
    logger.info("command_started", command="infer", checkpoint=str(checkpoint), images=str(image_dir))
    try:
        model, _ = load_checkpoint(checkpoint, settings.device)
        n = model.n_hourglass if n_modules is None else n_modules
        model.spec.clipped(n)
        threshold = conf_threshold or settings.conf_threshold or default_conf_thresholds(n)[n - 1]
        hp = HyperParams(
            conf_threshold=threshold,
            cluster_distance=cluster_threshold or settings.cluster_distance,
        )
    except (OSError, ModelSpecError, ValidationError) as e:
        logger.error("invalid_arguments", error=str(e))
        return EXIT_CONFIG
    try:
        h_samples_by_frame = {k: f.h_samples for k, f in read_tusimple_frames(labels).items()} if labels else {}
    except (OSError, MetricInputError) as e:
        logger.error("invalid_arguments", error=str(e))
        return EXIT_CONFIG

    records = []
    for path in _list_images(image_dir):
        relative = path.relative_to(image_dir).as_posix()
        try:
            image, (src_w, src_h) = ingest_image(path)
        except ImageReadError as e:
            logger.warning("image_skipped", image=relative, error=str(e))
            continue

        started = time.monotonic()
        grid = predict(model, to_tensor([image], settings.device), n)[n - 1].prediction_grid(0)
        points, lanes = detect_with_points(grid, hp)
        elapsed_ms = (time.monotonic() - started) * 1000.0

        scale = (src_w / image.shape[1], src_h / image.shape[0])
        if output_format == "culane":
            write_culane_lines(
                out_dir / Path(relative).with_suffix(".lines.txt"),
                [lane.as_array() * scale for lane in lanes],
            )
        h_samples = h_samples_by_frame.get(relative) or default_h_samples(src_h)
        record = tusimple_record(relative, lanes, h_samples, scale)
        record["run_time"] = round(elapsed_ms, 2)
        records.append(record)
        if overlay:
            write_overlay(out_dir / "overlays" / Path(relative).with_suffix(".png"), render_overlay(image, lanes, points))
        logger.debug("image_processed", image=relative, lanes=len(lanes), points=len(points))

    if not records:
        logger.error("nothing_processed", images=str(image_dir))
        return EXIT_NOTHING_PROCESSED
    if output_format == "tusimple":
        write_tusimple_labels(out_dir / PREDICTIONS_FILE, records)
    logger.info("command_finished", command="infer", frames=len(records), modules=n, out=str(out_dir))
    return EXIT_OK


def cmd_eval(
    pred_dir: Path | str,
    gt_dir: Path | str,
    benchmark: str = "tusimple",
    out_dir: Optional[Path | str] = None,
    angle_adjusted: bool = False,
) -> int:
    """Pontuar predições contra o ground truth e gravar o relatório em texto"""
    out_dir = Path(out_dir) if out_dir is not None else settings.output_dir / "eval"
    logger.info("command_started", command="eval", benchmark=benchmark, preds=str(pred_dir), gts=str(gt_dir))
    try:
        if benchmark == "culane":
            categories = read_culane_categories(gt_dir)
            gts = read_culane_frames(gt_dir)
            for name, frame in gts.items():
                frame.category = categories.get(name)
            preds, gts = pair_frames(read_culane_frames(pred_dir), gts)
            report = culane_score(preds, gts, workers=settings.num_workers)
        else:
            preds, gts = pair_frames(read_tusimple_frames(pred_dir), read_tusimple_frames(gt_dir))
            report = tusimple_score(preds, gts, angle_adjusted=angle_adjusted, workers=settings.num_workers)
    except FrameSetMismatch as e:
        logger.error("frame_set_mismatch", count=len(e.missing), missing=e.missing)
        return EXIT_FRAME_MISMATCH
    except (PINetError, OSError) as e:
        logger.error("invalid_input", error=str(e))
        return EXIT_CONFIG

    path = write_report(out_dir / REPORT_FILE, report)
    print(format_report(report), end="")
    print(report.headline())
    logger.info("command_finished", command="eval", report=str(path), headline=report.headline())
    return EXIT_OK


def cmd_clip(checkpoint_in: Path | str, n: int, checkpoint_out: Path | str) -> int:
    """Gravar um checkpoint só com os n primeiros módulos"""
    logger.info("command_started", command="clip", checkpoint=str(checkpoint_in), n=n)
    try:
        archive = read_archive(checkpoint_in)
        clipped = clip_checkpoint(archive, n)
    except (OSError, ModelSpecError) as e:
        logger.error("invalid_arguments", error=str(e))
        return EXIT_CONFIG
    write_archive(checkpoint_out, clipped)
    logger.info(
        "command_finished",
        command="clip",
        parameters_in=archive_parameter_count(archive),
        parameters_out=archive_parameter_count(clipped),
        out=str(checkpoint_out),
    )
    return EXIT_OK


def cmd_synth(
    out_dir: Path | str,
    count: int = 32,
    seed: int = 0,
    noise: float = 0.0,
    occlusion: float = 0.0,
) -> int:
    """Gravar um conjunto sintético no formato TuSimple"""
    try:
        config = SyntheticSceneConfig(seed=seed, noise=noise, occlusion=occlusion)
    except ValidationError as e:
        logger.error("invalid_arguments", error=str(e))
        return EXIT_CONFIG
    label_file = persist_synthetic(out_dir, count, config)
    logger.info("command_finished", command="synth", frames=count, labels=str(label_file))
    return EXIT_OK


def cmd_plot(history: Path | str, out: Path | str) -> int:
    """Gráfico de perdas e accuracy por profundidade a partir do histórico"""
    try:
        records = read_history(history)
    except (OSError, ValueError) as e:
        logger.error("invalid_history", error=str(e))
        return EXIT_CONFIG
    if not records:
        logger.error("nothing_processed", history=str(history))
        return EXIT_NOTHING_PROCESSED
    plot_history(records, out)
    return EXIT_OK
