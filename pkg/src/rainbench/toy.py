"""A tiny synthetic road dataset and a deterministic stand-in detector.

``python -m rainbench.toy build <dir>`` writes a 4-image, 2-class dataset
(class 0 = car, class 1 = person) with a ready-to-run ``sweep.cfg``.
``python -m rainbench.toy detect <input_dir> <output_dir> --dataset <dir>``
emulates a detector whose confidence drops as rain hides each object.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .deteval import read_ground_truth, read_manifest
from .imaging import Image, load_image, save_image

WIDTH, HEIGHT = 160, 120

# (class_id, x_min, y_min, x_max, y_max, rgb) in pixels
_SCENES = {
    "frame_000": [(0, 20, 60, 70, 90, (30, 40, 160)), (1, 110, 40, 122, 80, (200, 120, 60))],
    "frame_001": [(0, 80, 55, 140, 95, (150, 20, 20)), (1, 30, 35, 40, 75, (40, 160, 60))],
    "frame_002": [(0, 10, 70, 50, 100, (20, 20, 20)), (0, 95, 65, 150, 98, (180, 180, 40)),
                  (1, 70, 30, 80, 70, (90, 40, 140))],
    "frame_003": [(1, 20, 30, 31, 72, (200, 200, 200)), (1, 130, 38, 141, 78, (60, 60, 200)),
                  (0, 55, 60, 105, 92, (20, 120, 120))],
}


def _scene(objects) -> np.ndarray:
    yy, xx = np.mgrid[0:HEIGHT, 0:WIDTH]
    sky = np.stack([120 + 0 * yy, 150 + 0 * yy, 190 + 0 * yy], axis=-1).astype(np.float64)
    road = np.stack([70 + 0.2 * yy, 70 + 0.2 * yy, 75 + 0.2 * yy], axis=-1)
    img = np.where((yy >= HEIGHT // 3)[..., None], road, sky - 0.3 * yy[..., None])
    # lane marking texture so SSIM has structure to lose
    lane = ((xx // 8) % 2 == 0) & (np.abs(yy - 100) < 2)
    img[lane] = (230, 230, 230)
    for _, x0, y0, x1, y1, rgb in objects:
        img[y0:y1, x0:x1] = rgb
        img[y0:y0 + 2, x0:x1] = (245, 245, 245)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def build_toy_dataset(root, detector: bool = True, levels: str | None = None) -> Path:
    root = Path(root)
    (root / "clean").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(exist_ok=True)
    manifest = []
    for image_id, objects in _SCENES.items():
        save_image(Image(_scene(objects)), root / "clean" / f"{image_id}.png", "PNG")
        lines = []
        for cls, x0, y0, x1, y1, _ in objects:
            cx, cy = (x0 + x1) / 2 / WIDTH, (y0 + y1) / 2 / HEIGHT
            w, h = (x1 - x0) / WIDTH, (y1 - y0) / HEIGHT
            lines.append(f"{cls} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
        (root / "labels" / f"{image_id}.txt").write_text("\n".join(lines) + "\n")
        manifest.append(f"{image_id} {WIDTH} {HEIGHT} labels/{image_id}.txt {image_id}.txt")
    (root / "manifest.txt").write_text("\n".join(manifest) + "\n")
    cfg = ["dataset_root = .", "global_seed = 7", "classes = 0,1"]
    if levels:
        cfg.append(f"levels = {levels}")
    if detector:
        cfg.append("detector_cmd = {python} -m rainbench.toy detect {input_dir} {output_dir} --dataset .")
    (root / "sweep.cfg").write_text("\n".join(cfg) + "\n")
    return root


def fake_detections(clean: Image, rainy: Image, gts, frame_index: int):
    """Detection lines for one frame.

    Each object's confidence falls with the mean absolute change inside its
    box, and the box drifts sideways by the same amount. Heavy global change
    also spawns a spurious ``person`` in the sky.
    """
    a = clean.pixels.astype(np.float64)
    b = rainy.pixels.astype(np.float64)
    lines = []
    for k, g in enumerate(gts):
        x0, y0 = int(g.box.x_min), int(g.box.y_min)
        x1, y1 = int(np.ceil(g.box.x_max)), int(np.ceil(g.box.y_max))
        change = float(np.mean(np.abs(a[y0:y1, x0:x1] - b[y0:y1, x0:x1]))) / 255.0
        conf = 0.92 - 0.01 * k - 0.03 * frame_index - 2.5 * change
        if conf < 0.05:
            continue
        shift = 1.8 * change * (g.box.x_max - g.box.x_min)
        cx = ((g.box.x_min + g.box.x_max) / 2 + shift) / WIDTH
        cy = (g.box.y_min + g.box.y_max) / 2 / HEIGHT
        w = (g.box.x_max - g.box.x_min) / WIDTH
        h = (g.box.y_max - g.box.y_min) / HEIGHT
        lines.append(f"{g.class_id} {min(conf, 1.0):.6f} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
    overall = float(np.mean(np.abs(a - b))) / 255.0
    if overall > 0.01:
        lines.append(f"1 {min(0.9, 0.2 + 2.0 * overall):.6f} 0.500000 0.120000 0.060000 0.150000")
    return lines


def detect(input_dir, output_dir, dataset, withhold=()) -> int:
    dataset = Path(dataset)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for idx, e in enumerate(read_manifest(dataset / "manifest.txt")):
        if e.image_id in withhold:
            continue
        gts = read_ground_truth(dataset / e.gt_path, e.image_id, e.width, e.height)
        clean = load_image(dataset / "clean" / f"{e.image_id}.png")
        rainy = load_image(Path(input_dir) / f"{e.image_id}.png")
        lines = fake_detections(clean, rainy, gts, idx)
        (out / e.det_path).write_text("".join(line + "\n" for line in lines))
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m rainbench.toy")
    sub = ap.add_subparsers(dest="cmd", required=True)
    b = sub.add_parser("build", help="write the toy dataset")
    b.add_argument("root")
    b.add_argument("--no-detector", action="store_true")
    b.add_argument("--levels")
    d = sub.add_parser("detect", help="stand-in detector")
    d.add_argument("input_dir")
    d.add_argument("output_dir")
    d.add_argument("--dataset", required=True)
    d.add_argument("--withhold", action="append", default=[])
    args = ap.parse_args(argv)
    if args.cmd == "build":
        print(build_toy_dataset(args.root, not args.no_detector, args.levels))
        return 0
    return detect(args.input_dir, args.output_dir, args.dataset, tuple(args.withhold))


if __name__ == "__main__":
    sys.exit(main())
