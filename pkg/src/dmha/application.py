"""Command-line application for the DMHA toolkit"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from dmha import __version__
from dmha import commands
from dmha.config import load_config
from dmha.exceptions import DmhaException, GradcheckException
from dmha.logger import DmhaLogger, get_logger

logger = get_logger(__name__)


class DmhaApplication:
    """Main application class"""

    def __init__(self):
        self.parser = self._build_parser()

    def _build_parser(self) -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', metavar='PATH', help='JSON run configuration')
        common.add_argument('--seed', type=int, help='seed for data generation and training')
        common.add_argument('--out', metavar='DIR', help='output directory')
        common.add_argument('--log-level', default='INFO',
                            choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])

        parser = argparse.ArgumentParser(prog='dmha', description='Multimodal speech emotion recognition')
        parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
        sub = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

        sub.add_parser('synth', parents=[common], help='write a synthetic feature corpus')

        p = sub.add_parser('extract', parents=[common], help='log-mel features from a WAV manifest')
        p.add_argument('manifest')

        p = sub.add_parser('augment', parents=[common], help='write augmented copies of WAV files')
        p.add_argument('manifest')

        p = sub.add_parser('train', parents=[common], help='train a model on a manifest')
        p.add_argument('manifest', nargs='?')
        p.add_argument('--resume', metavar='CKPT', help='continue from a checkpoint')

        p = sub.add_parser('tune-thresholds', parents=[common], help='tune per-class decision thresholds')
        p.add_argument('checkpoint')
        p.add_argument('manifest')
        p.add_argument('--split', choices=['train', 'validation'])

        for name, help_text in (('eval', 'evaluate one model or a 3-model ensemble'),
                                ('predict', 'write per-utterance predictions')):
            p = sub.add_parser(name, parents=[common], help=help_text)
            p.add_argument('manifest')
            p.add_argument('checkpoints', nargs='*')
            p.add_argument('--ensemble', metavar='SPEC', help='ensemble spec JSON document')
        sub.choices['eval'].add_argument('--split', default='all', choices=['all', 'train', 'validation'])
        sub.choices['eval'].add_argument('--confusion-png', metavar='PATH')

        p = sub.add_parser('gradcheck', parents=[common], help='finite-difference gradient check')
        p.add_argument('--dropout', action='store_true', help='request an active dropout graph')

        p = sub.add_parser('config', parents=[common], help='show the configuration')
        p.add_argument('--dump', action='store_true', help='print the full default document')

        p = sub.add_parser('attention', parents=[common], help='render attention maps for one utterance')
        p.add_argument('checkpoint')
        p.add_argument('manifest')
        p.add_argument('utterance')
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = self.parser.parse_args(argv)
        DmhaLogger().set_level(args.log_level)
        try:
            return self._dispatch(args)
        except DmhaException as e:
            logger.error(f"{args.command} failed: {e}")
            message = ' '.join(str(e).split())
            print(f"dmha: error: {type(e).__name__}: {message}", file=sys.stderr)
            return 1

    def _dispatch(self, args) -> int:
        cfg = load_config(None if (args.command == 'config' and args.dump) else args.config)
        if args.seed is not None:
            cfg.set_seed(args.seed)
        out = Path(args.out) if args.out else Path('.')

        if args.command == 'synth':
            self._emit({'manifest': str(commands.cmd_synth(cfg, out))})
        elif args.command == 'extract':
            self._emit({'manifest': str(commands.cmd_extract(cfg, args.manifest, out))})
        elif args.command == 'augment':
            self._emit({'manifest': str(commands.cmd_augment(cfg, args.manifest, out))})
        elif args.command == 'train':
            manifest = args.manifest or cfg.data.manifest
            if not manifest:
                self.parser.error('train needs a manifest argument or data.manifest in the config')
            self._emit({'checkpoint': str(commands.cmd_train(cfg, manifest, out, resume=args.resume))})
        elif args.command == 'tune-thresholds':
            self._emit(commands.cmd_tune_thresholds(cfg, args.checkpoint, args.manifest, split=args.split))
        elif args.command == 'eval':
            self._emit(commands.cmd_eval(cfg, args.checkpoints, args.manifest, ensemble_spec=args.ensemble,
                                         split=args.split, out_dir=args.out,
                                         confusion_png=args.confusion_png))
        elif args.command == 'predict':
            path = commands.cmd_predict(cfg, args.checkpoints, args.manifest, out / 'predictions.jsonl',
                                        ensemble_spec=args.ensemble)
            self._emit({'predictions': str(path)})
        elif args.command == 'gradcheck':
            report = commands.cmd_gradcheck(cfg, force_dropout=args.dropout)
            self._emit(report)
            if not report['passed']:
                raise GradcheckException(f"relative error above {report['tolerance']:g}")
        elif args.command == 'config':
            self._emit(commands.cmd_config(cfg))
        elif args.command == 'attention':
            paths = commands.cmd_attention(cfg, args.checkpoint, args.manifest, args.utterance, out)
            self._emit({'images': [str(p) for p in paths]})
        return 0

    @staticmethod
    def _emit(data):
        print(json.dumps(data, indent=2))
