import numpy as np
import pytest
from hypothesis import given, strategies as st

from oblivid.codec import transform as tf
from oblivid.codec.boolcoder import (CHUNK_RANGE, ChunkEncoder, ChunkState, chunk_decision_bound,
                                     entropy_decode_bit)
from oblivid.codec.container import (HEADER_BYTES, SLOTS, DecodeError, Header, PaddingOverflow,
                                     container_size, parse_header)
from oblivid.codec.decoder import decode_row_bitstream, decode_stream
from oblivid.codec.encoder import default_n_chunk, encode_slots, encode_stream, reconstruct
from oblivid.codec.predict import DC, EDGE_FILL, TM, H, V, inter_predict, intra_predict
from oblivid.codec.reference import plain_decode_stream
from oblivid.codec.tree import MAX_MAGNITUDE, PACKED, TREE, Node, token_path
from oblivid.trace import TraceRecorder


def _decode_bits(data: bytes, probs):
    """Sequential reference use of the oblivious bit decoder."""
    out, ptr = [], 0
    st = ChunkState(data[0] | data[1] << 8)
    for p in probs:
        if st.r < 2:
            ptr += 2
            st = ChunkState(data[ptr] | data[ptr + 1] << 8)
        out.append(entropy_decode_bit(False, ptr, p, st, data))
    return out


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(16, 240)), min_size=1, max_size=300))
def test_chunk_coder_round_trip(pairs):
    enc = ChunkEncoder()
    for bit, p in pairs:
        enc.encode(bit, p)
    data = enc.finish()
    assert _decode_bits(data, [p for _, p in pairs]) == [b for b, _ in pairs]


def test_dummy_calls_leave_state():
    enc = ChunkEncoder()
    for b in (1, 0, 1, 1):
        enc.encode(b, 128)
    data = enc.finish()
    st = ChunkState(data[0] | data[1] << 8)
    assert entropy_decode_bit(True, 0, 128, st, data) is None
    assert (st.low, st.r) == (0, CHUNK_RANGE)
    assert entropy_decode_bit(False, 0, 128, st, data) == 1


def test_chunk_bound_covers_encoder():
    rng = np.random.default_rng(0)
    enc = ChunkEncoder()
    probs = [n.prob for n in TREE.nodes]
    for _ in range(20000):
        enc.encode(int(rng.integers(2)), int(rng.choice(probs)))
    enc.finish()
    assert enc.max_count <= default_n_chunk() == chunk_decision_bound(tuple(probs))


@given(st.one_of(st.none(), st.integers(-MAX_MAGNITUDE, MAX_MAGNITUDE)))
def test_token_path_walks_tree(value):
    path = token_path(value)
    node = 1
    reg = 0
    for i, (n, bit) in enumerate(path):
        assert n == node
        nd = TREE.nodes[n]
        if nd.acc:
            reg = reg * 2 + bit
        ends = nd.end1 if bit else nd.end0
        assert bool(ends) == (i == len(path) - 1)
        node = nd.next1 if bit else nd.next0
    last = TREE.nodes[path[-1][0]]
    if value is None:
        assert last.eob0 and path[-1][1] == 0
    elif value == 0:
        assert not last.sign
    else:
        mag = last.base + reg
        assert (-mag if path[-1][1] else mag) == value


def test_tree_packing():
    for i, n in enumerate(TREE.nodes):
        assert Node.unpack(int(PACKED[i])) == n
    assert len(TREE) <= 256
    with pytest.raises(ValueError):
        token_path(MAX_MAGNITUDE + 1)


@given(st.lists(st.integers(0, 255), min_size=16, max_size=16), st.integers(1, 40))
def test_transform_error_bound(px, q):
    blk = np.array(px, np.int64).reshape(4, 4)
    c = tf.forward(blk)
    assert (tf.inverse(c) == blk).all()
    rec = tf.dequant_inverse_transform(tf.quantize(c, q), q)
    assert np.abs(rec - blk).max() <= tf.error_bound(q)


def test_round_trip_lossless(rng):
    for shape in ((32, 32), (64, 64), (16, 48)):
        frames = [rng.integers(0, 256, shape, dtype=np.uint8) for _ in range(2)]
        out = decode_stream(encode_stream(frames, quant=1))
        assert all((a == b).all() for a, b in zip(out, frames))


@pytest.mark.parametrize("keyframe_only", [True, False])
@pytest.mark.parametrize("frame_level", [False, True])
def test_lossy_matches_encoder_reconstruction(rng, keyframe_only, frame_level):
    base = rng.integers(0, 256, (24, 32), dtype=np.uint8)
    frames = [np.roll(base, k, axis=1) for k in range(3)]
    data = encode_stream(frames, quant=6, keyframe_only=keyframe_only, frame_level=frame_level)
    out = decode_stream(data)
    ref = reconstruct(frames, 6, keyframe_only)
    assert all((a == b).all() for a, b in zip(out, ref))
    assert all((a == b).all() for a, b in zip(plain_decode_stream(data), ref))
    if keyframe_only:
        assert max(int(np.abs(a.astype(int) - b).max()) for a, b in zip(out, frames)) <= tf.error_bound(6)


def test_container_size_closed_form(rng):
    for fl in (False, True):
        frames = [rng.integers(0, 256, (16, 20), dtype=np.uint8) for _ in range(3)]
        data = encode_stream(frames, 2, frame_level=fl)
        h = parse_header(data)
        units = 1 if fl else 16 // 4
        assert len(data) == HEADER_BYTES + 3 * units * h.bits_bound // 8 == container_size(h)


def test_explicit_bound_and_overflow(rng):
    frames = [rng.integers(0, 256, (8, 8), dtype=np.uint8)]
    data = encode_stream(frames, 1, bits_bound=8192)
    assert parse_header(data).bits_bound == 8192 and len(data) == HEADER_BYTES + 2 * 1024
    with pytest.raises(PaddingOverflow) as exc:
        encode_stream(frames, 1, bits_bound=16)
    assert exc.value.frame == 0 and exc.value.row == 0 and exc.value.bits > 16


def test_header_round_trip_and_errors():
    h = Header(64, 32, 5, 3, 1024, False, 23, radius=2, frame_level=True)
    assert parse_header(h.pack()) == h
    with pytest.raises(DecodeError, match="magic"):
        parse_header(b"XXXX" + h.pack()[4:])
    with pytest.raises(DecodeError, match="header"):
        parse_header(b"OVC1")
    bad = bytearray(h.pack())
    bad[18] = 0x80
    with pytest.raises(DecodeError, match="flags"):
        parse_header(bytes(bad))
    with pytest.raises(DecodeError, match="resolution"):
        parse_header(Header(30, 32, 1, 1, 16, True, 23).pack())


def test_truncated_and_trailing(rng):
    data = encode_stream([rng.integers(0, 256, (16, 16), dtype=np.uint8)], 1)
    h = parse_header(data)
    with pytest.raises(DecodeError) as exc:
        decode_stream(data[: HEADER_BYTES + 2 * h.unit_bytes + 5])
    assert exc.value.row == 2
    with pytest.raises(DecodeError, match="trailing"):
        decode_stream(data + b"\0")


def test_row_tuples_real_tail(rng):
    from oblivid.codec.boolcoder import ChunkEncoder
    slots = np.zeros((3, SLOTS), np.int64)
    slots[0, [0, 3, 7]] = (2, -5, 300)
    slots[2, 18] = 1
    enc = ChunkEncoder()
    for s in slots:
        encode_slots(enc, s)
    unit = enc.finish() + bytes(64)
    tuples = decode_row_bitstream(unit, default_n_chunk(), 3)
    tail = tuples[-3 * SLOTS:]
    assert all(t.flag == 1 for t in tail)
    assert [t.index for t in tail] == list(range(3 * SLOTS))
    assert [t.value for t in tail] == slots.reshape(-1).tolist()
    assert all(t.flag == 0 for t in tuples[: -3 * SLOTS])


def test_decoder_trace_independent_of_content(rng):
    ds = set()
    for k in range(3):
        frames = [rng.integers(0, 256, (8, 16), dtype=np.uint8) * (k % 2) for _ in range(2)]
        data = encode_stream(frames, 3, bits_bound=4096, keyframe_only=False)
        rec = TraceRecorder(1)
        decode_stream(data, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def _intra_ref(recon, by, bx, mode):
    y0, x0 = by * 4, bx * 4
    top = recon[y0 - 1, x0:x0 + 4].astype(int) if by else np.full(4, EDGE_FILL)
    left = recon[y0:y0 + 4, x0 - 1].astype(int) if bx else np.full(4, EDGE_FILL)
    corner = int(recon[y0 - 1, x0 - 1]) if by and bx else EDGE_FILL
    if mode == DC:
        return np.full((4, 4), (top.sum() + left.sum() + 4) >> 3)
    if mode == V:
        return np.tile(top, (4, 1))
    if mode == H:
        return np.tile(left[:, None], (1, 4))
    return np.clip(left[:, None] + top[None, :] - corner, 0, 255)


def test_intra_predict_modes(rng):
    recon = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    for by in range(4):
        for bx in range(4):
            for mode in (DC, V, H, TM):
                assert (intra_predict((by, bx), recon, mode) == _intra_ref(recon, by, bx, mode)).all()


def test_inter_predict(rng):
    prev = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    blk = lambda y, x: prev[y * 4:y * 4 + 4, x * 4:x * 4 + 4]
    assert (inter_predict((1, 1), prev, (1, -1), 1) == blk(2, 0)).all()
    assert (inter_predict((0, 0), prev, (-1, 0), 1) == blk(0, 0)).all()    # clamped
    assert (inter_predict((2, 2), prev, (2, 0), 1) == blk(2, 2)).all()     # outside radius
    with pytest.raises(ValueError):
        inter_predict((0, 0), prev, (0, 0), -1)


def test_prediction_traces_hide_mode_and_vector(rng):
    recon = rng.integers(0, 256, (16, 16), dtype=np.uint8)
    ds = set()
    for mode, mv in ((0, (0, 0)), (3, (1, -1)), (2, (5, 5))):
        rec = TraceRecorder(1)
        intra_predict((1, 2), recon, mode, rec)
        inter_predict((1, 2), recon, mv, 1, rec)
        ds.add(rec.digest())
    assert len(ds) == 1


def test_encoder_input_validation(rng):
    with pytest.raises(ValueError, match="multiple of 4"):
        encode_stream([np.zeros((6, 8), np.uint8)])
    with pytest.raises(ValueError, match="frame 1"):
        encode_stream([np.zeros((8, 8), np.uint8), np.zeros((4, 8), np.uint8)])
    with pytest.raises(ValueError):
        encode_stream([])
    with pytest.raises(ValueError, match="n_chunk"):
        encode_stream([rng.integers(0, 256, (8, 8), dtype=np.uint8)], 1, n_chunk=2)
