"""Fidelity heatmaps over the two node birefringences, both encodings."""

from __future__ import annotations

import argparse

from _common import out_dir, write_json

from cartsim.experiments import SweepSpec, load_preset, run_birefringence_heatmap


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="generic")
    ap.add_argument("--resolution", type=int, default=21)
    ap.add_argument("--span", type=float, default=2.0, help="axis range in units of kappa")
    ap.add_argument("--window", type=float, default=None, help="us; default 5/kappa")
    ap.add_argument("--max-points", type=int, default=512)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/fig4")
    args = ap.parse_args(argv)
    out = out_dir(args.out)

    node = load_preset(args.preset).node
    manifest = {}
    for encoding in ("frequency", "polarization"):
        spec = SweepSpec.square(args.resolution, args.span, window=args.window, encoding=encoding,
                                max_points=args.max_points)
        heat = run_birefringence_heatmap(spec, node, jobs=args.jobs)
        heat.to_csv(out / f"heatmap_{encoding}.csv")
        manifest[encoding] = {"spec": spec.to_dict(), "failed": sum(bool(c.error) for c in heat.cells)}
        grid = heat.fidelity_grid()
        print(f"{encoding}: F(0,0) = {grid[0, 0]:.4f}, F(0,max) = {grid[0, -1]:.4f}, "
              f"F(max,max) = {grid[-1, -1]:.4f}")
    write_json(out / "heatmaps.json", {"preset": args.preset, "node": node.to_dict(), "runs": manifest})


if __name__ == "__main__":
    main()
