"""Command-line interface.

Subcommands: compute (run the pipeline on an image pair), eval (score an
estimate directory against ground truth), viz (render a flow file), edges
(dump the detected edge map). Exit codes: 0 success, 1 usage, 2 I/O,
3 pipeline failure.
"""
from __future__ import annotations

import argparse
import os
import sys

from .errors import FormatError, InvalidInputError, MatchflowError, PipelineStageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_PIPELINE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="matchflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="estimate optical flow for an image pair")
    p.add_argument("frame1")
    p.add_argument("frame2")
    p.add_argument("--out", required=True, help="output flow path (.flo, or .png with --kitti-png)")
    p.add_argument("--preset", choices=("kitti", "sintel"), default=None)
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--edges", default=None, help="EDG1 edge map instead of the built-in detector")
    p.add_argument("--matches", default=None, help="resume from a dumped matches.txt artifact")
    p.add_argument("--dump-stages", default=None, metavar="DIR")
    p.add_argument("--kitti-png", action="store_true", help="write KITTI 16-bit PNG instead of .flo")
    p.add_argument("--no-viz", action="store_true", help="skip the side-by-side PNG rendering")

    p = sub.add_parser("eval", help="evaluate a directory of flow estimates")
    p.add_argument("est_dir")
    p.add_argument("gt_dir")
    p.add_argument("--fg-masks", default=None, metavar="DIR", help="object maps for the bg/fg split")
    p.add_argument("--occ-masks", default=None, metavar="DIR", help="occlusion maps for the matched/unmatched split")
    p.add_argument("--out", default=None, help="write the aggregate report as key-value text")

    p = sub.add_parser("viz", help="render a flow file with the color wheel")
    p.add_argument("flow")
    p.add_argument("out")
    p.add_argument("--max-magnitude", type=float, default=None)

    p = sub.add_parser("edges", help="detect and dump an edge map")
    p.add_argument("image")
    p.add_argument("out", help="EDG1 output path")
    p.add_argument("--png", default=None, help="also write a grayscale preview")
    return parser


def _cmd_compute(args) -> int:
    from .edges import load_edges
    from .filtering import MatchSet
    from .flowio import write_flo, write_kitti_png
    from .image import load_image
    from .pipeline import load_config, run_pipeline, save_visualization

    img1 = load_image(args.frame1)
    img2 = load_image(args.frame2)
    config = load_config(args.config, preset=args.preset, seed=args.seed)
    edge_map = load_edges(args.edges, width=img1.width, height=img1.height) if args.edges else None
    matches = MatchSet.load_text(args.matches) if args.matches else None

    result = run_pipeline(config, img1, img2, edge_map=edge_map, matches=matches,
                          dump_dir=args.dump_stages)

    if args.kitti_png:
        write_kitti_png(args.out, result.flow)
    else:
        write_flo(args.out, result.flow)
    if not args.no_viz:
        save_visualization(os.path.splitext(args.out)[0] + ".png"
                           if not args.out.endswith(".png") else args.out + ".viz.png",
                           result.flow)
    print(f"wrote {args.out} ({len(result.matches)} matches, "
          f"{result.segmentation.count} superpixels)")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .evaluate import format_report_table, run_eval

    rows, aggregate, missing = run_eval(args.est_dir, args.gt_dir,
                                        fg_mask_dir=args.fg_masks,
                                        unmatched_mask_dir=args.occ_masks)
    print(format_report_table(rows + [("mean", aggregate)]))
    for stem in missing:
        print(f"warning: no readable counterpart for {stem!r}", file=sys.stderr)
    if args.out:
        with open(args.out, "w") as fh:
            for key, value in aggregate.as_keyvalues():
                fh.write(f"{key} = {value}\n")
    return EXIT_IO if missing else EXIT_OK


def _cmd_viz(args) -> int:
    from .flowio import read_flow_any
    from .pipeline import save_visualization

    flow = read_flow_any(args.flow)
    save_visualization(args.out, flow, args.max_magnitude)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_edges(args) -> int:
    import numpy as np

    from .edges import detect_edges, save_edges
    from .image import GRAY, Image, load_image, save_image

    img = load_image(args.image)
    edge_map = detect_edges(img)
    save_edges(args.out, edge_map)
    if args.png:
        save_image(args.png, Image(edge_map.strength[:, :, None].astype(np.float32), GRAY))
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "compute": _cmd_compute,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
    "edges": _cmd_edges,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except PipelineStageError as exc:
        print(f"matchflow: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except (FileNotFoundError, FormatError, OSError) as exc:
        print(f"matchflow: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidInputError, MatchflowError) as exc:
        print(f"matchflow: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
