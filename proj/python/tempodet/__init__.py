"""Python bindings for the tempodet detector core."""

import sys

from ._core import PixelBox, coco_thresholds, iou, map_range, nms, run

__all__ = ["PixelBox", "coco_thresholds", "iou", "main", "map_range", "nms", "run"]


def main() -> int:
    code, out, err = run(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
