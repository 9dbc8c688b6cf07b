"""Smoke test for the augloop extension module.

Build first:
    cargo build -p augloop-py --features extension-module
then run from the repository root:
    python3 python/smoke.py
"""

import json
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libaugloop.so")
        if os.path.exists(lib):
            break
    else:
        sys.exit("libaugloop.so not found; build crates/py with --features extension-module")
    tmp = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(tmp, "augloop.so"))
    sys.path.insert(0, tmp)
    import augloop

    return augloop


def main():
    augloop = load_module()
    kinds = augloop.catalog_kinds()
    assert len(kinds) == 16 and "rotate" in kinds, kinds

    text = '{"n":1,"ops":[{"kind":"rotate","p":1,"params":{"degrees":20}}]}'
    policy = augloop.Policy(text, 1)
    assert policy.kinds() == ["rotate"]
    assert augloop.Policy(policy.canonical(), 1).canonical() == policy.canonical()

    errors = augloop.validate('{"n":1,"ops":[{"kind":"AutoContrast","params":{}}]}', 1)
    assert errors and errors[0][0] == "UNKNOWN_KIND", errors

    op = json.loads(augloop.magnitude_to_params("rotate", 0.5))
    assert abs(op["params"]["degrees"] - 90.0) < 1e-9, op

    img = [0.25] * (8 * 8)
    out = policy.apply(img, 8, 8, 1, seed=7)
    assert len(out) == 64 and all(0.0 <= v <= 1.0 for v in out)

    with tempfile.TemporaryDirectory() as out_dir:
        config = {
            "method": "method2",
            "dataset": {"synthetic": {"train_per_class": 10, "valid_per_class": 10}},
            "provider": "mock-oracle",
            "epochs": 4,
            "t_interval": 2,
            "seed": 1,
            "output_dir": out_dir,
        }
        summary = json.loads(augloop.run_experiment(json.dumps(config)))
        assert summary["llm_queries"] == 3, summary
        assert os.path.exists(summary["ledger"])
    print("smoke ok:", len(kinds), "kinds,", summary["run_id"])


if __name__ == "__main__":
    main()
