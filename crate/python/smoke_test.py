#!/usr/bin/env python3
"""Smoke test for the pyunitals extension module.

Builds nothing itself: it locates the compiled cdylib under target/, exposes
it as an importable module, and drives a few end-to-end checks.

    cargo build -p pyunitals --release
    python3 python/smoke_test.py
"""

import json
import pathlib
import shutil
import sys
import tempfile


def locate_module() -> pathlib.Path:
    root = pathlib.Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libpyunitals.so", "pyunitals.dll", "libpyunitals.dylib")
    ]
    for cand in candidates:
        if cand.exists():
            return cand
    sys.exit("build the extension first: cargo build -p pyunitals [--release]")


def main() -> None:
    lib = locate_module()
    staging = pathlib.Path(tempfile.mkdtemp(prefix="pyunitals-"))
    shutil.copy(lib, staging / "pyunitals.so")
    sys.path.insert(0, str(staging))
    import pyunitals

    # field arithmetic: GF(16) over GF(4)
    f = pyunitals.Field(4)
    assert f.order == 16 and f.modulus == 0b10011
    assert f.add(5, 9) == 12
    for a in range(1, 16):
        assert f.mul(a, f.inv(a)) == 1
        assert f.conjugate(f.conjugate(a)) == a
    norms = {}
    for a in range(1, 16):
        norms.setdefault(f.norm(a), 0)
        norms[f.norm(a)] += 1
    assert sorted(norms.values()) == [5, 5, 5], "norm is 5-to-1 on nonzero elements"

    # the classical unitals of orders 2 and 4
    u2 = pyunitals.Unital.hermitian(1)
    assert (u2.num_points, u2.num_lines) == (9, 12)
    u4 = pyunitals.Unital.hermitian(2)
    assert (u4.num_points, u4.num_lines) == (65, 208)
    assert u4.is_design()
    assert u4.check_onan() == []
    assert u4.check_condition_ii() is None

    # derived structures at order 4
    assert u4.inversive_plane_counts(0) == (17, 48, 20)
    spread = u4.special_spread(0)
    assert len(spread) == 13 and 0 in spread
    m = [l for l in spread if l != 0][0]
    n = u4.polar_triple(0, m)
    assert n in spread and n != m

    # JSON round trip
    u4b = pyunitals.Unital.from_json(u4.to_json())
    assert u4b.num_lines == 208

    # order-2 certification: construction stages pass, theorems skipped
    passed, bundle_text = u2.certify_classical()
    bundle = json.loads(bundle_text)
    assert passed and bundle["verdict"] == "pass"
    skipped = [s for s in bundle["stages"] if s["status"] == "skipped"]
    assert len(skipped) > 10

    # full order-4 certification
    passed, bundle_text = u4.certify_classical(mode="exhaustive")
    bundle = json.loads(bundle_text)
    assert passed, [s for s in bundle["stages"] if s["status"] != "pass"]
    names = [s["statement"] for s in bundle["stages"]]
    assert "classicality" in names

    # build artifacts round trip
    unital_json, tables_json = pyunitals.build_artifacts(2)
    assert json.loads(unital_json)["v"] == 9
    assert len(json.loads(tables_json)["unital_point_coords"]) == 9

    print("pyunitals smoke test: OK")


if __name__ == "__main__":
    main()
