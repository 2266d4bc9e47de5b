"""
Treinamento ponta a ponta: amostragem com mineração de difíceis, aumento de
dados, codificação dos rótulos, perdas de todos os módulos e passo do Adam

Um único coordenador (Trainer) é dono dos parâmetros e do estado do
amostrador; a avaliação roda sobre uma cópia recortada do modelo.
"""

import json
import math
import time
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import structlog
import torch

from pinet.models.grid import IMAGE_HEIGHT
from pinet.models.lane import Sample
from pinet.models.params import HyperParams, ModelSpec, SyntheticSceneConfig, TrainConfig
from pinet.models.report import EvalReport
from pinet.services.augment import augment
from pinet.services.checkpoint import load_checkpoint, make_archive, save_checkpoint, write_archive
from pinet.services.datasets import load_culane, load_tusimple, resample_lane
from pinet.services.encoding import encode_label, grids_to_tensors
from pinet.services.images import to_tensor
from pinet.services.losses import total_loss
from pinet.services.metrics import TusimpleFrame, map_frames, tusimple_score
from pinet.services.network import PINet, clip, predict
from pinet.services.postprocess import detect
from pinet.services.sampler import HardSampleMiner
from pinet.services.synthetic import generate_dataset
from pinet.utils.errors import ModelSpecError, SamplingError, TrainingAborted

logger = structlog.get_logger(__name__)

HISTORY_FILE = "history.jsonl"
LAST_CHECKPOINT = "last.pt"
ABORT_SNAPSHOT = "abort_snapshot.pt"

# Validação no espaço 512x256: 20 px da origem 1280 x (512/1280)
VALIDATION_PIXEL_THRESHOLD = 8.0
VALIDATION_H_SAMPLES = tuple(range(0, IMAGE_HEIGHT, 4))


class TrainResult(NamedTuple):
    model: PINet
    history: List[dict]
    checkpoint: Path
    reports: Dict[int, EvalReport]


class HistoryWriter:
    """Registros JSON, um por linha, no arquivo de histórico

    Sem `append` a primeira escrita trunca o arquivo de uma execução anterior.
    """

    def __init__(self, path: Path, append: bool = False):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.append = append
        self.records: List[dict] = []

    def write(self, record: dict) -> None:
        mode = "a" if self.append or self.records else "w"
        self.records.append(record)
        with self.path.open(mode) as fp:
            fp.write(json.dumps(record) + "\n")


def read_history(path: Path | str) -> List[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / HISTORY_FILE
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def load_dataset(config: TrainConfig) -> List[Sample]:
    """Conjunto de treinamento descrito pela configuração"""
    if config.dataset == "synthetic":
        scene = SyntheticSceneConfig(
            noise=config.synthetic_noise,
            occlusion=config.synthetic_occlusion,
            seed=config.seed,
        )
        return generate_dataset(scene, config.synthetic_count)
    if config.dataset == "tusimple":
        root = config.dataset_path
        label_files = [root] if root.is_file() else sorted(root.glob("label_data*.json"))
        return load_tusimple(label_files, root if root.is_dir() else root.parent)
    return load_culane(config.dataset_path, config.list_file)


def _frame(source_id: str, lanes, h_samples: Sequence[float]) -> TusimpleFrame:
    xs = [resample_lane(lane, h_samples) for lane in lanes]
    return TusimpleFrame(raw_file=source_id, h_samples=list(h_samples), lanes=[x for x in xs if max(x) >= 0])


def evaluate_clips(
    model: PINet,
    samples: Sequence[Sample],
    thresholds: Sequence[float],
    cluster_distance: float = 0.08,
    pixel_threshold: float = VALIDATION_PIXEL_THRESHOLD,
    batch_size: int = 6,
    workers: int = 0,
) -> Dict[int, EvalReport]:
    """Para cada n = 1..N: recortar, detectar e pontuar no estilo TuSimple"""
    if len(thresholds) < model.n_hourglass:
        raise ModelSpecError(f"{len(thresholds)} limiares para {model.n_hourglass} módulos")
    gts = [_frame(s.source_id, s.lanes, VALIDATION_H_SAMPLES) for s in samples]

    reports: Dict[int, EvalReport] = {}
    for n in range(1, model.n_hourglass + 1):
        clipped = clip(model, n)
        hp = HyperParams(conf_threshold=thresholds[n - 1], cluster_distance=cluster_distance)
        grids = []
        for start in range(0, len(samples), batch_size):
            chunk = samples[start:start + batch_size]
            device = next(clipped.parameters()).device
            outputs = predict(clipped, to_tensor([s.image for s in chunk], device))
            grids += [outputs[-1].prediction_grid(i) for i in range(len(chunk))]

        lanes_per_frame = map_frames(lambda grid: detect(grid, hp), grids, workers)
        preds = [_frame(s.source_id, lanes, VALIDATION_H_SAMPLES) for s, lanes in zip(samples, lanes_per_frame)]
        reports[n] = tusimple_score(preds, gts, pixel_threshold=pixel_threshold)
    return reports


class Trainer:
    """Coordenador do treinamento: modelo, otimizador, agendador e amostrador"""

    def __init__(
        self,
        config: TrainConfig,
        dataset: Sequence[Sample],
        model: Optional[PINet] = None,
        validation: Optional[Sequence[Sample]] = None,
    ):
        if not dataset:
            raise SamplingError("conjunto de treinamento vazio")
        self.config = config
        self.device = torch.device(config.device)
        torch.manual_seed(config.seed)
        self.rng = np.random.default_rng(config.seed)

        pool = list(dataset)
        if validation is None and config.val_fraction > 0:
            order = self.rng.permutation(len(pool))
            n_val = max(1, int(round(config.val_fraction * len(pool))))
            validation = [pool[i] for i in order[:n_val]]
            pool = [pool[i] for i in order[n_val:]]
        self.pool = pool
        self.validation = list(validation) if validation is not None else pool

        self.model = (model or PINet(ModelSpec(n_hourglass=config.n_hourglass))).to(self.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
            self.optimizer, mode="max", factor=config.lr_plateau_factor, patience=config.lr_plateau_patience
        )
        self.miner = HardSampleMiner(config.hard_fraction, seed=config.seed)
        self.batch_size = min(config.batch_size, len(self.pool))
        if self.batch_size < config.batch_size:
            logger.warning("batch_size_reduced", requested=config.batch_size, pool=len(self.pool))

        self.out_dir = Path(config.out_dir)
        self.history = HistoryWriter(self.out_dir / HISTORY_FILE)
        self.epoch = 0
        self.step = 0

    @property
    def steps_per_epoch(self) -> int:
        return max(1, math.ceil(len(self.pool) / self.batch_size))

    def resume(self, checkpoint: Path | str) -> None:
        """Continuar de um checkpoint: pesos, otimizador, agendador e contadores"""
        model, archive = load_checkpoint(checkpoint, self.device)
        self.model.load_state_dict(model.state_dict())
        if "optimizer" in archive:
            self.optimizer.load_state_dict(archive["optimizer"])
        if "scheduler" in archive:
            self.scheduler.load_state_dict(archive["scheduler"])
        self.epoch = int(archive.get("epoch", 0))
        self.step = int(archive.get("step", 0))
        # avança o gerador para não repetir os lotes já vistos
        self.rng = np.random.default_rng([self.config.seed, self.step])
        self.miner.rng = np.random.default_rng([self.config.seed, self.step, 1])
        self.history.append = True
        logger.info("training_resumed", checkpoint=str(checkpoint), epoch=self.epoch, step=self.step)

    def _prepare(self, batch: Sequence[Sample]) -> List[Sample]:
        if not self.config.augment_ops:
            return list(batch)
        seeds = self.rng.integers(0, 2**31 - 1, size=len(batch)).tolist()
        pairs = list(zip(batch, seeds))
        return map_frames(
            lambda pair: augment(pair[0], self.config.augment_ops, pair[1]), pairs, self.config.num_workers
        )

    def _abort(self, images: torch.Tensor, targets: Dict[str, torch.Tensor], batch: Sequence[Sample], loss) -> None:
        snapshot = self.out_dir / ABORT_SNAPSHOT
        snapshot.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "epoch": self.epoch,
                "step": self.step,
                "source_ids": [s.source_id for s in batch],
                "images": images.detach().cpu(),
                "targets": {k: v.detach().cpu() for k, v in targets.items()},
                "losses": loss.breakdown.model_dump(),
                "archive": make_archive(self.model, epoch=self.epoch, step=self.step),
            },
            snapshot,
        )
        logger.error("training_aborted", epoch=self.epoch, step=self.step, snapshot=str(snapshot))
        raise TrainingAborted(f"perda não finita no passo {self.step}", snapshot)

    def train_step(self, batch: Sequence[Sample], hp: HyperParams) -> dict:
        """Um passo de otimização; atualiza last_loss das amostras do pool"""
        prepared = self._prepare(batch)
        images = to_tensor([s.image for s in prepared], self.device)
        targets = grids_to_tensors([encode_label(s.lanes) for s in prepared], self.device)

        self.model.train()
        outputs = self.model(images)
        loss = total_loss(outputs, targets, hp)
        if not torch.isfinite(loss.total):
            self._abort(images, targets, batch, loss)

        self.optimizer.zero_grad()
        loss.total.backward()
        self.optimizer.step()
        self.step += 1
        self.miner.update_losses(batch, loss.per_sample.cpu().tolist())

        record = {"kind": "step", "epoch": self.epoch, "step": self.step, "gamma_e": hp.gamma_e}
        record.update(loss.breakdown.model_dump())
        self.history.write(record)
        return record

    def evaluate(self) -> Dict[int, EvalReport]:
        return evaluate_clips(
            self.model,
            self.validation,
            self.config.conf_thresholds,
            self.config.cluster_distance,
            batch_size=self.config.batch_size,
            workers=self.config.num_workers,
        )

    def save(self) -> Path:
        path = save_checkpoint(
            self.out_dir / "checkpoints" / f"epoch_{self.epoch:04d}.pt",
            self.model,
            optimizer=self.optimizer,
            scheduler=self.scheduler,
            epoch=self.epoch,
            step=self.step,
        )
        write_archive(
            self.out_dir / LAST_CHECKPOINT,
            make_archive(self.model, self.optimizer, self.epoch, self.step, self.scheduler),
        )
        return path

    def run(self) -> TrainResult:
        """Treinar da época atual até config.epochs"""
        logger.info(
            "training_started",
            samples=len(self.pool),
            validation=len(self.validation),
            modules=self.model.n_hourglass,
            epochs=self.config.epochs,
            steps_per_epoch=self.steps_per_epoch,
        )
        reports: Dict[int, EvalReport] = {}
        while self.epoch < self.config.epochs:
            self.epoch += 1
            hp = self.config.hyper_params(self.epoch)
            started = time.monotonic()
            step_records = [
                self.train_step(self.miner.sample_batch(self.pool, self.batch_size), hp)
                for _ in range(self.steps_per_epoch)
            ]

            record = {
                "kind": "epoch",
                "epoch": self.epoch,
                "step": self.step,
                "gamma_e": hp.gamma_e,
                "lr": self.optimizer.param_groups[0]["lr"],
                "total": float(np.mean([r["total"] for r in step_records])),
                "seconds": round(time.monotonic() - started, 3),
            }
            if self.epoch % self.config.eval_every == 0 or self.epoch == self.config.epochs:
                reports = self.evaluate()
                deepest = reports[self.model.n_hourglass]
                self.scheduler.step(deepest.f1)
                record["validation"] = {
                    str(n): {"accuracy": r.accuracy, "fp": r.fp_rate, "fn": r.fn_rate, "f1": r.f1}
                    for n, r in reports.items()
                }
            self.history.write(record)
            logger.info(
                "epoch_finished",
                epoch=self.epoch,
                step=self.step,
                loss=round(record["total"], 5),
                gamma_e=hp.gamma_e,
                accuracy=record.get("validation", {}).get(str(self.model.n_hourglass), {}).get("accuracy"),
            )
            if self.epoch % self.config.checkpoint_every == 0:
                self.save()

        checkpoint = self.save()
        logger.info("training_finished", epoch=self.epoch, step=self.step, checkpoint=str(checkpoint))
        return TrainResult(self.model, self.history.records, checkpoint, reports)


def train(
    config: TrainConfig,
    dataset: Sequence[Sample],
    model: Optional[PINet] = None,
    resume: Optional[Path | str] = None,
    validation: Optional[Sequence[Sample]] = None,
) -> TrainResult:
    trainer = Trainer(config, dataset, model, validation)
    if resume is not None:
        trainer.resume(resume)
    return trainer.run()
