"""Command-line interface.

Subcommands: mesh-info, tables, convert, irregularity, spherize-mnist,
render-net, train-demo.  Exit codes: 0 success, 1 runtime or I/O failure,
2 usage error.  Every subcommand is deterministic given its flags; anything
random takes an explicit seed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import formats, geometry, indexing, irregularity, nnops, projection


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="icogrid",
        description="Icosahedral sphere-grid toolkit for 360-degree images",
    )
    sub = p.add_subparsers(dest="command", required=True)

    mi = sub.add_parser("mesh-info", help="print mesh counts and area statistics")
    mi.add_argument("--subdivision", type=int, required=True)

    tb = sub.add_parser("tables", help="compile conv/pool/unpool gather tables")
    tb.add_argument("--subdivision", type=int, required=True)
    tb.add_argument("--out", required=True, help="output directory")

    cv = sub.add_parser("convert", help="convert between erp, cube and sphd images")
    cv.add_argument("--from", dest="src", choices=["erp", "cube", "sphd"], required=True)
    cv.add_argument("--to", dest="dst", choices=["erp", "cube", "sphd"], required=True)
    cv.add_argument("--in", dest="inp", required=True)
    cv.add_argument("--out", required=True)
    cv.add_argument("--subdivision", type=int, help="sphd output level")
    cv.add_argument("--face-size", type=int, help="cube output face size")
    cv.add_argument("--width", type=int, help="erp output width")
    cv.add_argument("--height", type=int, help="erp output height")
    cv.add_argument("--rotate-seed", type=int, help="random view rotation seed")
    cv.add_argument("--supersample", type=int, default=1, help="erp render supersampling")

    ir = sub.add_parser("irregularity", help="effective-area irregularity report")
    ir.add_argument("--rep", choices=["sphd", "cube", "erp"], required=True)
    ir.add_argument("--subdivision", type=int)
    ir.add_argument("--face-size", type=int)
    ir.add_argument("--width", type=int)
    ir.add_argument("--height", type=int)
    ir.add_argument("--bins", type=int, default=36)
    ir.add_argument("--csv", required=True, help="output CSV path")

    sm = sub.add_parser("spherize-mnist", help="project digit images onto the sphere grid")
    sm.add_argument("--idx", required=True, help="IDX image file")
    sm.add_argument("--labels", help="IDX label file (default: derived from --idx)")
    sm.add_argument("--subdivision", type=int, default=3)
    sm.add_argument("--count", type=int, required=True)
    sm.add_argument("--seed", type=int, required=True)
    sm.add_argument("--out", required=True, help="output directory")
    sm.add_argument("--angular-width", type=float, default=60.0)

    rn = sub.add_parser("render-net", help="draw a sphd image as an unfolded net")
    rn.add_argument("--in", dest="inp", required=True, help="input .sphi")
    rn.add_argument("--out", required=True, help="output .pgm/.ppm raster")
    rn.add_argument("--tri-size", type=int, default=64, help="triangle edge length in px")

    td = sub.add_parser("train-demo", help="train the reference classifier on a data dir")
    td.add_argument("--data", required=True, help="directory from spherize-mnist")
    td.add_argument("--epochs", type=int, default=5)
    td.add_argument("--lr", type=float, default=0.01)
    td.add_argument("--batch", type=int, default=64)
    td.add_argument("--seed", type=int, default=0)
    td.add_argument("--hidden", type=int, nargs=2, default=(32, 64))
    return p


def cmd_mesh_info(args) -> int:
    if not 0 <= args.subdivision <= 8:
        raise UsageError("--subdivision must be in 0..8")
    stats = geometry.mesh_statistics(geometry.build_mesh(args.subdivision))
    print(f"subdivision: {stats['subdivision']}")
    print(f"faces: {stats['faces']}")
    print(f"vertices: {stats['vertices']}")
    print(f"edges: {stats['edges']}")
    print(f"euler_characteristic: {stats['euler_characteristic']}")
    print(f"degree5_vertices: {stats['degree5_vertices']}")
    print(f"area_min: {stats['area_min']:.9e}")
    print(f"area_mean: {stats['area_mean']:.9e}")
    print(f"area_max: {stats['area_max']:.9e}")
    print(f"area_sum: {stats['area_sum']:.12f}")
    return 0


def cmd_tables(args) -> int:
    if args.subdivision < 1:
        raise UsageError("--subdivision must be >= 1 for tables")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mesh = geometry.build_mesh(args.subdivision)
    conv = indexing.build_conv_table(mesh)
    pool = indexing.build_pool_table(args.subdivision)
    unpool = indexing.build_unpool_table(args.subdivision)
    formats.write_spht_conv(out / f"conv_n{args.subdivision}.spht", conv)
    formats.write_spht_pool(out / f"pool_n{args.subdivision}.spht", pool)
    formats.write_spht_unpool(out / f"unpool_n{args.subdivision}.spht", unpool)
    report = indexing.verify_tables(mesh, conv, pool)
    print(report.summary())
    if not report.all_passed:
        return 1
    print(f"wrote 3 tables to {out}")
    return 0


def _load_image(kind: str, path: str):
    if kind == "sphd":
        img = formats.read_sphi(path)
        return projection.SphdImage(img.subdivision, img.data.astype(np.float64))
    arr = formats.read_netpbm(path)
    if kind == "erp":
        return projection.ErpImage(arr.astype(np.float64))
    return formats.read_cubemap(path)


def _save_image(kind: str, path: str, img) -> int:
    if kind == "sphd":
        formats.write_sphi(path, img, dtype="f32")
        return 0
    if kind == "cube":
        formats.write_cubemap(path, img)
        return 0
    data = np.clip(np.rint(img.data), 0, 255).astype(np.uint8)
    if data.shape[2] == 1:
        formats.write_pgm(path, data[:, :, 0])
    elif data.shape[2] == 3:
        formats.write_ppm(path, data)
    else:
        raise UsageError("erp rasters support 1 or 3 channels")
    return 0


def cmd_convert(args) -> int:
    if args.src == args.dst:
        raise UsageError("--from and --to must differ")
    rot = projection.random_rotation(args.rotate_seed) if args.rotate_seed is not None else None
    src = _load_image(args.src, args.inp)

    if args.dst == "sphd":
        if args.subdivision is None:
            raise UsageError("--subdivision is required for sphd output")
        if args.src == "erp":
            out = projection.erp_to_sphd(src, args.subdivision, rot)
        else:
            out = projection.cubemap_to_sphd(src, args.subdivision, rot)
    elif args.dst == "cube":
        if args.face_size is None:
            raise UsageError("--face-size is required for cube output")
        if args.src == "erp":
            out = projection.erp_to_cubemap(src, args.face_size, rot)
        else:
            if rot is not None:
                raise UsageError("--rotate-seed is not supported for sphd input")
            out = projection.sphd_to_cubemap(src, args.face_size)
    else:
        if args.width is None or args.height is None:
            raise UsageError("--width and --height are required for erp output")
        if args.src == "sphd":
            if rot is not None:
                raise UsageError("--rotate-seed is not supported for sphd input")
            out = projection.sphd_to_erp(src, args.height, args.width, args.supersample)
        else:
            out = projection.cubemap_to_erp(src, args.height, args.width)
    return _save_image(args.dst, args.out, out)


def _representation(args):
    if args.rep == "sphd":
        if args.subdivision is None:
            raise UsageError("--subdivision is required for --rep sphd")
        return irregularity.SphdRep(args.subdivision)
    if args.rep == "cube":
        if args.face_size is None:
            raise UsageError("--face-size is required for --rep cube")
        return irregularity.CubeRep(args.face_size)
    if args.width is None or args.height is None:
        raise UsageError("--width and --height are required for --rep erp")
    return irregularity.ErpRep(args.height, args.width)


def cmd_irregularity(args) -> int:
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    rep = _representation(args)
    areas = irregularity.effective_areas(rep)
    result = irregularity.irregularity(areas)
    profiles = irregularity.binned_irregularity(
        areas, irregularity.pixel_directions(rep), args.bins
    )
    with open(args.csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["representation", "N", "score"])
        writer.writerow([areas.tag, areas.areas.size, f"{result.score:.12f}"])
        writer.writerow(
            ["axis", "bin_start_deg", "bin_end_deg", "count", "mean_abs_d", "max_abs_d", "mean_d"]
        )
        for axis, prof in (("lat", profiles.latitude), ("lon", profiles.longitude)):
            for i in range(len(prof.count)):
                writer.writerow(
                    [
                        axis,
                        f"{prof.edges_deg[i]:.6f}",
                        f"{prof.edges_deg[i + 1]:.6f}",
                        prof.count[i],
                        f"{prof.mean_abs_d[i]:.12f}",
                        f"{prof.max_abs_d[i]:.12f}",
                        f"{prof.mean_d[i]:.12f}",
                    ]
                )
    print(f"{areas.tag}: N={areas.areas.size} score={result.score:.6f} -> {args.csv}")
    return 0


def _derive_labels_path(idx_path: str) -> Path:
    name = Path(idx_path).name
    if "images-idx3" in name:
        return Path(idx_path).with_name(name.replace("images-idx3", "labels-idx1"))
    raise UsageError("cannot derive the label file name; pass --labels")


def cmd_spherize_mnist(args) -> int:
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    images = formats.read_mnist_images(args.idx)
    labels_path = Path(args.labels) if args.labels else _derive_labels_path(args.idx)
    labels = formats.read_mnist_labels(labels_path)
    if len(labels) != len(images):
        raise UsageError("image and label files disagree on the sample count")
    if args.count > len(images):
        raise UsageError(f"--count exceeds the {len(images)} available images")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    n = args.subdivision
    rows = []
    for i in range(args.count):
        frame = projection.frame_from_rotation(projection.random_rotation(rng))
        canvas = projection.SphdImage(n, np.zeros((1, geometry.pixel_count(n))))
        digit = images[i].astype(np.float64)
        stamped = projection.stamp_with_frame(canvas, digit, frame, args.angular_width)
        name = f"img_{i:05d}.sphi"
        formats.write_sphi(out / name, stamped, dtype="f32")
        rows.append((name, int(labels[i])))
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "label"])
        writer.writerows(rows)
    print(f"wrote {args.count} images + labels.csv to {out}")
    return 0


# net layout: each base face -> its three corner positions on the raster
def _net_layout(tri_size: int) -> dict[int, np.ndarray]:
    """2-D corner coordinates for the 20 base faces in the classic strip."""
    mesh = geometry.build_mesh(0)
    h = tri_size * np.sqrt(3.0) / 2.0
    margin = 2.0
    top = margin
    corners: dict[int, np.ndarray] = {}
    vertex_pos: dict[tuple[int, int], np.ndarray] = {}

    # band faces sorted by centroid longitude occupy alternating positions
    band = list(range(5, 15))
    down_cols = [f for f in band if not mesh.orientations[f]]
    up_cols = [f for f in band if mesh.orientations[f]]
    for col, f in enumerate(down_cols):
        x0 = margin + col * tri_size
        a = np.array([x0, top + h])  # apex (bottom)
        b = np.array([x0 + tri_size, top])  # its vertex 1 (top right)
        c = np.array([x0, top])  # breaks below
        v0, v1, v2 = mesh.faces[f]
        # down face: vertex0 bottom apex, vertex1 east(top-right), vertex2 west(top-left)
        corners[f] = np.array([[x0 + tri_size / 2.0, top + h], [x0 + tri_size, top], [x0, top]])
        vertex_pos[(f, v0)] = corners[f][0]
        vertex_pos[(f, v1)] = corners[f][1]
        vertex_pos[(f, v2)] = corners[f][2]
    for col, f in enumerate(up_cols):
        x0 = margin + col * tri_size + tri_size / 2.0
        v0, v1, v2 = mesh.faces[f]
        # up face: vertex0 top apex, vertex1 west(bottom-left), vertex2 east(bottom-right)
        corners[f] = np.array([[x0 + tri_size / 2.0, top], [x0, top + h], [x0 + tri_size, top + h]])

    # caps share edges with band faces: place them by matching shared vertices
    nb = indexing.edge_neighbors_all(mesh)
    for f in range(5):  # north caps: above their band (down) neighbor
        below = nb[f, 0]  # neighbor through the cap's base edge
        bx = corners[below]
        # cap base = down face's top edge, apex above its middle
        left, right = bx[2], bx[1]
        apex = np.array([(left[0] + right[0]) / 2.0, top - h])
        corners[f] = np.array([apex, left, right])
    for f in range(15, 20):  # south caps: below their band (up) neighbor
        above = nb[f, 0]
        bx = corners[above]
        left, right = bx[1], bx[2]
        apex = np.array([(left[0] + right[0]) / 2.0, top + 2 * h])
        corners[f] = np.array([apex, right, left])
    return corners


def render_net(img: projection.SphdImage, tri_size: int = 64) -> np.ndarray:
    """Rasterize a sphere image as the classic 20-triangle unfolded net.

    Returns (H, W) u8 for single-channel images, (H, W, 3) u8 for three.
    """
    n = img.subdivision
    corners = _net_layout(tri_size)
    h = tri_size * np.sqrt(3.0) / 2.0
    width = int(np.ceil(5.5 * tri_size + 4))
    height = int(np.ceil(3 * h + 4 + 2))
    lo, hi = img.data.min(), img.data.max()
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    canvas = np.zeros((height, width, img.channels), dtype=np.uint8)

    yy, xx = np.mgrid[0:height, 0:width]
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1).astype(np.float64) + 0.5
    for f, tri in corners.items():
        # barycentric coordinates wrt (v0, v1, v2)
        t = np.vstack([tri.T, np.ones(3)])
        try:
            inv = np.linalg.inv(t)
        except np.linalg.LinAlgError:
            continue
        bary = np.hstack([pts, np.ones((len(pts), 1))]) @ inv.T
        inside = (bary >= -1e-9).all(axis=1)
        if not inside.any():
            continue
        b = bary[inside]
        idx = np.full(len(b), f, dtype=np.int64)
        for _ in range(n):
            a0, a1, a2 = b[:, 0], b[:, 1], b[:, 2]
            code = np.zeros(len(b), dtype=np.int64)
            code[a0 >= 0.5] = 1
            code[a1 >= 0.5] = 2
            code[a2 >= 0.5] = 3
            nb_ = b.copy()
            center = code == 0
            nb_[center] = 1.0 - 2.0 * b[center]
            for c_, col in ((1, 0), (2, 1), (3, 2)):
                mask = code == c_
                scaled = 2.0 * b[mask]
                scaled[:, col] -= 1.0
                nb_[mask] = scaled
            b = nb_
            idx = idx * 4 + code
        vals = img.data[:, idx].T  # (M, C)
        shade = np.clip(np.rint((vals - lo) * scale), 0, 255).astype(np.uint8)
        flat_ids = np.where(inside)[0]
        canvas.reshape(-1, img.channels)[flat_ids] = shade
    return canvas[:, :, 0] if img.channels == 1 else canvas[:, :, :3]


def cmd_render_net(args) -> int:
    if args.tri_size < 4:
        raise UsageError("--tri-size must be >= 4")
    img = formats.read_sphi(args.inp)
    img = projection.SphdImage(img.subdivision, img.data.astype(np.float64))
    raster = render_net(img, args.tri_size)
    if raster.ndim == 2:
        formats.write_pgm(args.out, raster)
    else:
        formats.write_ppm(args.out, raster)
    print(f"rendered net -> {args.out}")
    return 0


def _load_dataset(data_dir: Path):
    labels_file = data_dir / "labels.csv"
    if not labels_file.exists():
        raise FileNotFoundError(f"missing {labels_file}")
    names, labels = [], []
    with open(labels_file, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            names.append(row["file"])
            labels.append(int(row["label"]))
    images = []
    subdivision = None
    for name in names:
        img = formats.read_sphi(data_dir / name)
        subdivision = img.subdivision
        images.append(img.data.astype(np.float64) / 255.0)
    return np.stack(images), np.array(labels), subdivision


def cmd_train_demo(args) -> int:
    x, labels, subdivision = _load_dataset(Path(args.data))
    net = nnops.SphdClassifier(
        subdivision=subdivision,
        in_channels=x.shape[1],
        hidden=tuple(args.hidden),
        classes=10,
        seed=args.seed,
    )
    rng = np.random.default_rng(args.seed)
    n = len(x)
    for epoch in range(args.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, args.batch):
            sel = order[start:start + args.batch]
            losses.append(net.train_step(x[sel], labels[sel], args.lr))
        acc = net.accuracy(x, labels)
        print(f"epoch {epoch + 1}/{args.epochs} loss={np.mean(losses):.4f} acc={acc:.4f}")
    return 0


_HANDLERS = {
    "mesh-info": cmd_mesh_info,
    "tables": cmd_tables,
    "convert": cmd_convert,
    "irregularity": cmd_irregularity,
    "spherize-mnist": cmd_spherize_mnist,
    "render-net": cmd_render_net,
    "train-demo": cmd_train_demo,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (formats.FormatError, OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
