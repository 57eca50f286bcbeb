"""Imports the compiled extension and exercises each binding once.

Build first with `cargo build -p l1flow-py --release`, or install with
`maturin develop` from crates/py. The test finds the shared library under
target/ when the module is not already importable.
"""

import importlib.util
import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load_l1flow():
    try:
        import l1flow  # noqa: F401

        return sys.modules["l1flow"]
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libl1flow.so"
        if lib.exists():
            break
    else:
        raise SystemExit("build the extension first: cargo build -p l1flow-py --release")
    tmp = Path(tempfile.mkdtemp())
    target = tmp / "l1flow.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("l1flow", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


l1flow = load_l1flow()


def test_network():
    g = l1flow.Network.path(3)
    assert g.edges == [(1, 2), (2, 3)]
    assert g.incidence_matrix() == [[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]]
    assert not l1flow.Network(3, [(1, 2)]).is_connected()


def test_linear_algebra():
    p = l1flow.kernel_projector([[1.0, 1.0]])
    for row, want in zip(p, [[0.5, -0.5], [-0.5, 0.5]]):
        assert all(abs(x - y) < 1e-12 for x, y in zip(row, want))
    assert l1flow.has_full_row_rank([[1.0, 0.0], [0.0, 1.0]])
    assert not l1flow.has_full_row_rank([[1.0, 2.0], [2.0, 4.0]])


def test_oracles():
    lp = l1flow.min_l1_lp([[2.0, 1.0]], [2.0])
    assert abs(lp["optimal_value"] - 1.0) < 1e-12
    assert lp["unique"] == "yes"
    tie = l1flow.vertex_enum_oracle([[1.0, 1.0]], [1.0])
    assert tie["unique"] == "no"
    fx = l1flow.fixture()
    a = [row for blk in fx["blocks"] for row in blk["a"]]
    b = [v for blk in fx["blocks"] for v in blk["b"]]
    assert abs(l1flow.min_l1_lp(a, b)["optimal_value"] - 2.026450931382044) < 1e-10


def test_schedule_and_sign():
    assert abs(l1flow.k_schedule(0.1, 0.01, 0.0) - 0.11) < 1e-15
    assert l1flow.sgn_select([3.0, -2.0, 0.0], 1e-9) == [1.0, -1.0, 0.0]


def test_run_and_bound():
    cfg = (ROOT / "configs" / "fixture_centralized.json").read_text()
    cfg = json.loads(cfg)
    cfg.pop("output_dir", None)
    summary, series = l1flow.run_experiment(json.dumps(cfg))
    assert summary["converged"]
    assert summary["l1_gap"] <= 1e-3
    assert len(series["times"]) == summary["samples"]
    assert max(series["constraint_residual"]) <= 1e-8

    bound = l1flow.delta_bound(json.dumps({"system": {"kind": "fixture_paper"}, "graph": "path4", "flow": "distributed_l1"}))
    assert bound["delta_max"] > 0.0 and math.isfinite(bound["delta_max"])


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name}: ok")
