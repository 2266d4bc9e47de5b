"""
PINet - detecção de faixas por pontos-chave
Ponto de entrada da linha de comando
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import structlog

from pinet.cli import commands
from pinet.config import settings
from pinet.utils.logging import configure_logging

logger = structlog.get_logger(__name__)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Semente (sobrepõe o arquivo de configuração)")
    common.add_argument("--out", type=Path, default=None, help="Diretório de saída")
    common.add_argument("--n-modules", type=int, default=None, help="Número de módulos hourglass usados")
    common.add_argument("--conf-threshold", type=float, default=None, help="Limiar de confiança")
    common.add_argument("--cluster-threshold", type=float, default=None, help="Distância de agrupamento")
    common.add_argument("--log-level", default=settings.log_level, help="debug, info, warning, error")
    common.add_argument("--log-json", action="store_true", default=settings.log_json, help="Logs em JSON")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="pinet", description=settings.app_name)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="Treinar a partir de um arquivo CHAVE=VALOR")
    p.add_argument("config", type=Path)
    p.add_argument(
        "--resume", nargs="?", const="last", default=None,
        help="Retomar do checkpoint indicado (sem valor: <out_dir>/last.pt)",
    )

    p = sub.add_parser("infer", parents=[common], help="Detectar faixas em um diretório de imagens")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("image_dir", type=Path)
    p.add_argument("--overlay", action="store_true", help="Gravar imagens com pontos e curvas")
    p.add_argument("--format", dest="output_format", choices=("tusimple", "culane"), default="tusimple")
    p.add_argument("--labels", type=Path, default=None, help="Rótulos TuSimple de onde tirar os h_samples")

    p = sub.add_parser("eval", parents=[common], help="Avaliar predições contra o ground truth")
    p.add_argument("pred_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.add_argument("--benchmark", choices=("tusimple", "culane"), default="tusimple")
    p.add_argument("--angle-adjusted", action="store_true", help="Limiar por ponto 20/cos(ângulo)")

    p = sub.add_parser("clip", parents=[common], help="Recortar um checkpoint para os n primeiros módulos")
    p.add_argument("checkpoint_in", type=Path)
    p.add_argument("n", type=int)
    p.add_argument("checkpoint_out", type=Path)

    p = sub.add_parser("synth", parents=[common], help="Gravar um conjunto sintético no formato TuSimple")
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--occlusion", type=float, default=0.0)

    p = sub.add_parser("plot", parents=[common], help="Gráfico do histórico de treinamento")
    p.add_argument("history", type=Path)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_json)
    logger.info("pinet_starting", command=args.command, version=settings.app_version, device=settings.device)

    if args.command == "train":
        code = commands.cmd_train(
            args.config, args.resume, args.seed, args.out, args.n_modules, args.conf_threshold, args.cluster_threshold
        )
    elif args.command == "infer":
        code = commands.cmd_infer(
            args.checkpoint,
            args.image_dir,
            n_modules=args.n_modules,
            out_dir=args.out,
            conf_threshold=args.conf_threshold,
            cluster_threshold=args.cluster_threshold,
            overlay=args.overlay,
            output_format=args.output_format,
            labels=args.labels,
        )
    elif args.command == "eval":
        code = commands.cmd_eval(args.pred_dir, args.gt_dir, args.benchmark, args.out, args.angle_adjusted)
    elif args.command == "clip":
        code = commands.cmd_clip(args.checkpoint_in, args.n, args.checkpoint_out)
    elif args.command == "synth":
        out = args.out or settings.output_dir / "synthetic"
        code = commands.cmd_synth(out, args.count, args.seed or 0, args.noise, args.occlusion)
    else:
        out = args.out or Path(args.history).with_suffix(".png")
        code = commands.cmd_plot(args.history, out)

    logger.info("pinet_finished", command=args.command, exit_code=code)
    return code


if __name__ == "__main__":
    sys.exit(main())
