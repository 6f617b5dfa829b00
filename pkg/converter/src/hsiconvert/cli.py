"""hsiconvert command line: `convert` a MAT scene pair, `verify` the result.

Exit codes: 0 success, 1 verification failure or bad input data, 2 usage or
missing-file errors.
"""

import argparse
import sys
from pathlib import Path

from .convert import ConversionError, ConversionJob, convert, verify
from .formats import FormatFailure


def _require(path: str) -> str:
    if not Path(path).is_file():
        raise FileNotFoundError(f"file not found: {path}")
    return path


def cmd_convert(args) -> int:
    class_names = None
    if args.class_names:
        class_names = [
            line.strip()
            for line in Path(_require(args.class_names)).read_text().splitlines()
            if line.strip()
        ]
    job = ConversionJob(
        cube_path=_require(args.cube),
        gt_path=_require(args.gt),
        out_cube=args.out_cube,
        out_labels=args.out_labels,
        cube_var=args.cube_var,
        gt_var=args.gt_var,
        expect_bands=args.expect_bands,
        class_names=class_names,
    )
    report = convert(job)
    print(
        f"converted {args.cube} [{report['cube_var']}] + {args.gt} [{report['gt_var']}] "
        f"-> {args.out_cube}, {args.out_labels}"
    )
    print(
        f"  {report['height']}x{report['width']}, {report['bands']} bands, "
        f"{report['classes']} classes"
    )
    return 0


def cmd_verify(args) -> int:
    report = verify(_require(args.hsic), _require(args.hsil))
    print(f"{args.hsic}: {report['height']}x{report['width']}, {report['bands']} bands")
    print(f"{args.hsil}: {report['classes']} classes")
    for cid, name in enumerate(report["class_names"], start=1):
        print(f"  class {cid:2d} {name:30s} {report['histogram'][cid]} px")
    print("ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsiconvert",
        description="Convert MAT-format AVIRIS scenes into HSIC/HSIL binary files",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="MAT cube + ground truth -> HSIC + HSIL")
    p.add_argument("--cube", required=True, help="MAT file holding the radiance cube")
    p.add_argument("--gt", required=True, help="MAT file holding the ground truth")
    p.add_argument("--cube-var", default=None, help="variable name inside the cube MAT")
    p.add_argument("--gt-var", default=None, help="variable name inside the gt MAT")
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--expect-bands", type=int, default=None,
                   help="fail unless the cube has exactly this many bands")
    p.add_argument("--class-names", default=None,
                   help="text file with one class name per line (classes 1..K)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="validate an HSIC/HSIL pair and print a report")
    p.add_argument("hsic")
    p.add_argument("hsil")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatFailure, ConversionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
