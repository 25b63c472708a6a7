"""Smoke tests for the gapsparse extension module.

Usage: test_smoke.py <dir-containing-built-module>
"""

import math
import os
import sys
import tempfile
import textwrap

sys.path.insert(0, sys.argv[1])

import gapsparse  # noqa: E402


def test_magnitude_mask():
    mask = gapsparse.magnitude_mask(
        [0.3, -0.1, 0.4, 0.2, -0.05, 0.25], rows=1, ratio=0.5
    )
    assert mask == [1, 0, 1, 0, 0, 1], mask

    dense = gapsparse.magnitude_mask([1.0, 2.0, 3.0], rows=1, ratio=0.0)
    assert dense == [1, 1, 1]

    blocky = gapsparse.magnitude_mask(
        [0.1] * 8 + [1.0] + [0.0] * 7, rows=2, ratio=0.5, block=True
    )
    assert blocky == [0] * 8 + [1] * 8


def test_mask_relative_error():
    err = gapsparse.mask_relative_error([3.0, 4.0], [1, 0])
    assert abs(err - 0.64) < 1e-15, err
    assert gapsparse.mask_relative_error([0.0, 0.0], [1, 0]) is None


def test_coverage():
    expected = gapsparse.coupon_expected_steps(10)
    assert abs(expected - 10 * sum(1.0 / i for i in range(1, 11))) < 1e-12
    assert gapsparse.scheduled_coverage_steps(10) == 10

    sim = gapsparse.simulate_random_coverage(10, 1, 2000, 42)
    assert 28.4 < sim["mean"] < 30.2, sim["mean"]

    p = gapsparse.full_coverage_probability(10, 5, 1, 0)
    assert p == 0.0
    p_many = gapsparse.full_coverage_probability(10, 5, 5, 50)
    assert 0.99 < p_many <= 1.0


def test_lr_schedule():
    assert gapsparse.lr_at(0.4, "cosine", 0, 5, 10) == 0.2
    assert gapsparse.lr_at(0.4, "constant", 0, 5, 10) == 0.4
    try:
        gapsparse.lr_at(0.4, "warp", 0, 0, 10)
    except gapsparse.GapConfigError:
        pass
    else:
        raise AssertionError("bad schedule accepted")


def test_train_roundtrip():
    with tempfile.TemporaryDirectory() as work:
        config_path = os.path.join(work, "run.cfg")
        with open(config_path, "w") as fh:
            fh.write(
                textwrap.dedent(
                    f"""
                    [run]
                    method = cgap
                    seed = 5
                    output_dir = {work}

                    [model]
                    layers = 6 8 2

                    [data]
                    samples = 120
                    val_fraction = 0.25

                    [optimizer]
                    lr = 0.1

                    [sparsity]
                    ratio = 0.5

                    [gap]
                    kappa = 2
                    steps = 2
                    epochs_per_step = 1
                    finetune_epochs = 1
                    batch_size = 16
                    """
                )
            )
        summary = gapsparse.train(config_path)
        assert summary["method"] == "cgap"
        assert summary["epochs"] == 3
        assert abs(summary["sparsity"] - 0.5) < 0.05
        assert 0.0 <= summary["val_accuracy"] <= 1.0

        info = gapsparse.inspect_checkpoint(os.path.join(work, "cgap-s5.ckpt"))
        assert info["layers"] == 2
        assert abs(info["sparsity"] - summary["sparsity"]) < 1e-12


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"ok - {test.__name__}")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    main()
