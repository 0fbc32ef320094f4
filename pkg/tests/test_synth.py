import numpy as np
import pytest

from oblivid.synth import synth_video


def test_moving_square_truth_and_lead_in():
    v = synth_video("moving-square", 30, 64, 64, seed=3, size=8, lead_in=5)
    assert all(t == [] for t in v.truth[:5])
    xs = [t[0][1] for t in v.truth[5:]]
    assert all((b - a) % (64 - 8 + 1) == 1 for a, b in zip(xs, xs[1:]))
    t, l, b, r = v.truth[10][0]
    assert v.frames[10][t:b + 1, l:r + 1].min() > 200


def test_two_blobs_and_static():
    v = synth_video("two-blobs", 5, 64, 64, size=8)
    assert all(len(t) == 2 for t in v.truth)
    s = synth_video("static", 4, 32, 32, size=4)
    assert all((f == s.frames[0]).all() for f in s.frames)


def test_deterministic():
    a = synth_video(seed=9, frames=3)
    b = synth_video(seed=9, frames=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.frames, b.frames))


@pytest.mark.parametrize("kw", [{"scenario": "nope"}, {"lead_in": -1}, {"frames": 0}, {"size": 40, "width": 64}])
def test_rejects(kw):
    with pytest.raises(ValueError):
        synth_video(**kw)
