"""Smoke test for the Python bindings.

Build first:  cargo build -p mcseg-python --features extension-module
Then run:     python3 python/smoke_test.py [path/to/libmcseg.so]
"""

import importlib.util
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load(path=None):
    if path is None:
        for profile in ("release", "debug"):
            for name in ("libmcseg.so", "libmcseg.dylib", "mcseg.dll"):
                cand = os.path.join(ROOT, "target", profile, name)
                if os.path.exists(cand):
                    path = cand
                    break
            if path:
                break
    if path is None:
        sys.exit("libmcseg not found; build the mcseg-python crate first")
    # the interpreter only imports extension modules named after the module
    tmp = tempfile.mkdtemp()
    ext = ".pyd" if path.endswith(".dll") else ".so"
    dst = os.path.join(tmp, "mcseg" + ext)
    shutil.copy(path, dst)
    spec = importlib.util.spec_from_file_location("mcseg", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def miou_per_shape(pred, gt, n):
    ious = []
    for l in range(n):
        inter = sum(1 for p, g in zip(pred, gt) if g >= 0 and p == l and g == l)
        union = sum(1 for p, g in zip(pred, gt) if g >= 0 and (p == l or g == l))
        if union:
            ious.append(inter / union)
    return 100.0 * sum(ious) / len(ious)


def main():
    mcseg = load(sys.argv[1] if len(sys.argv) > 1 else None)
    print("mcseg", mcseg.__version__)

    schema = "levels 2\nlevel 1 2 a b\nlevel 2 3 x y z\nparent 0 0\nparent 1 0\nparent 2 1\n"
    n = 4
    # uniform fine level; the coarse level equals its merge, (2/3, 1/3)
    logits = [[[math.log(2), 0.0] for _ in range(n)], [[0.0] * 3 for _ in range(n)]]
    corr = [(i, i, i) for i in range(n)]
    labels = [[0, 0, 1, 1], [0, 1, 2, 2]]
    r = mcseg.loss_terms(schema, logits, logits, corr, labels)
    want = (2 * -math.log(2 / 3) + 2 * -math.log(1 / 3)) / n + math.log(3)
    assert abs(r["seg"] - want) < 1e-12, r
    assert r["point"] == 0.0 and r["part"] == 0.0 and r["hier"] == 0.0, r
    assert abs(r["total"] - want) < 1e-12, r

    preds = [[0, 1, 1, 2], [2, 2, 0]]
    gts = [[0, 1, 0, -1], [2, 1, 0]]
    s = mcseg.s_miou(preds, gts, 3)
    want = sum(miou_per_shape(p, g, 3) for p, g in zip(preds, gts)) / len(preds)
    assert abs(s - want) < 1e-9, (s, want)
    p = mcseg.p_miou(preds, gts, 3)
    assert abs(p - miou_per_shape(sum(preds, []), sum(gts, []), 3)) < 1e-9, p

    pts, levels = mcseg.generate_shape("chair", 3, points=256)
    assert len(pts) == 256 and all(len(l) == 256 for l in levels)
    assert mcseg.generate_shape("chair", 3, points=256) == (pts, levels)
    assert mcseg.category_schema("chair").startswith("levels ")

    for name, rel, ok in mcseg.gradcheck(instances=5):
        assert ok, (name, rel)

    try:
        mcseg.generate_shape("no-such-category", 0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown category accepted")
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
