import numpy as np
import pytest

from oblivid.core import oaccess, osort
from oblivid.oracle import (PublicParams, gen_lookup, gen_sort_input, gen_trip_count,
                            leaky_early_exit_sort, leaky_lookup, leaky_trip_count, verify_oblivious)
from oblivid.vision.bgsub import BgParams, bg_subtract_pixel, PixelMixture


def test_oaccess_passes():
    v = verify_oblivious(lambda x, r: oaccess(x[0], x[1], r), gen_lookup(256), 20, 0)
    assert v.passed and v.first_divergence is None and v.trials == 20


def test_osort_passes():
    assert verify_oblivious(lambda x, r: osort(list(x), rec=r), gen_sort_input(), 20, 0).passed


@pytest.mark.parametrize("op,gen", [(leaky_lookup, gen_lookup()),
                                    (leaky_early_exit_sort, gen_sort_input()),
                                    (leaky_trip_count, gen_trip_count())])
def test_negative_controls_fail(op, gen):
    v = verify_oblivious(op, gen, 20, 0)
    assert not v.passed
    trial, idx = v.first_divergence
    assert trial >= 1 and idx >= 0


def test_verdict_is_deterministic():
    a = verify_oblivious(leaky_trip_count, gen_trip_count(), 20, 7)
    b = verify_oblivious(leaky_trip_count, gen_trip_count(), 20, 7)
    assert a.to_dict() == b.to_dict()


def test_pixel_update_passes():
    def op(xs, rec):
        mix = PixelMixture.empty(4)
        for x in xs:
            bg_subtract_pixel(mix, float(x), BgParams(), rec)
    v = verify_oblivious(op, lambda rng: rng.integers(0, 256, 30), 20, 0)
    assert v.passed


def test_failing_op_names_trial():
    def op(x, rec):
        if x > 0.5:
            raise RuntimeError("boom")
    v = verify_oblivious(op, lambda rng: rng.random(), 20, 0)
    assert not v.passed and "boom" in v.error
    assert v.error.startswith(f"trial {v.first_divergence[0]}")


def test_needs_two_trials():
    with pytest.raises(ValueError):
        verify_oblivious(leaky_lookup, gen_lookup(), 1)


def test_public_params_validation():
    p = PublicParams({"width": 64, "height": 64, "k_prime": 4})
    assert p["width"] == 64
    with pytest.raises(ValueError):
        PublicParams({"width": 0})
    with pytest.raises(ValueError):
        PublicParams({"colour": 3})
