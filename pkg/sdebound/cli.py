import argparse
import json
import logging
import os
import sys

from . config import load_config
from . errors import SdeBoundError
from . harness import build_instance, error_curve, verify_all, export_bound_curve, export_samples, write_json

logger = logging.getLogger(__name__)


def _common(parser):
    parser.add_argument('--config', help='Path to the experiment JSON (defaults are used for missing keys).')
    parser.add_argument('--seed', type=int, help='Override master_seed.')
    parser.add_argument('--workers', type=int, help='Override the number of worker processes.')
    parser.add_argument('--out', help='Output directory (overrides output_dir).')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging.')


def build_parser():
    ap = argparse.ArgumentParser(
        prog='sdebound',
        description='Lower error bounds for adaptive strong approximation of a family of SDEs: '
                    'constants, psi construction, error curves and property checks.',
    )
    sub = ap.add_subparsers(dest='command', required=True)

    p = sub.add_parser('build-psi', help='Build psi from the rate plan; write psi.json and bound_curve.csv.')
    _common(p)

    p = sub.add_parser('constants', help='Derived constants (alpha, beta, gamma, c1, c2) and N0 as JSON.')
    _common(p)

    p = sub.add_parser('error-curve', help='Measure scheme errors against the lower bound; write CSVs.')
    _common(p)
    p.add_argument('--runs', action='store_true', help='Also write per-path run records.')

    p = sub.add_parser('verify', help='Run the property suite; exit status 1 on any failure.')
    _common(p)

    p = sub.add_parser('sample', help='Write example paths and solutions as CSV.')
    _common(p)
    p.add_argument('--paths', type=int, default=3, help='Number of paths to export.')

    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )

    try:
        config = load_config(args.config, master_seed=args.seed, workers=args.workers, output_dir=args.out)
        out_dir = config.output_dir

        if args.command == 'constants':
            inst = build_instance(config)
            dct = dict(inst.consts.to_dict(), N0=inst.N0)
            print(json.dumps(dct, indent=2))
            if args.out:
                os.makedirs(out_dir, exist_ok=True)
                write_json(dct, os.path.join(out_dir, 'constants.json'))

        elif args.command == 'build-psi':
            export_bound_curve(config, out_dir)
            logger.info('wrote psi.json and bound_curve.csv to %s', out_dir)

        elif args.command == 'error-curve':
            error_curve(config, out_dir=out_dir, write_runs=args.runs)
            logger.info('wrote error_curve.csv to %s', out_dir)

        elif args.command == 'verify':
            report = verify_all(config, out_dir=out_dir)
            failed = [e['name'] for e in report['properties'] if e['status'] == 'fail']
            if failed:
                logger.error('failed properties: %s', ', '.join(failed))
                return 1
            logger.info('all properties passed')

        elif args.command == 'sample':
            export_samples(config, args.paths, out_dir)
            logger.info('wrote %d paths to %s', args.paths, out_dir)

    except SdeBoundError as e:
        logger.error('%s: %s', e.__class__.__name__, e)
        return 2

    return 0


if __name__ == '__main__':
    sys.exit(main())
