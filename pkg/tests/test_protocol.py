"""Wire grammar, shift buffer, and session state machine tests."""

from collections import deque

import numpy as np
import pytest

from bearingedge.errors import BufferNotFull, ParseError
from bearingedge.protocol import (
    Ack,
    Bye,
    Data,
    DeviceSession,
    End,
    Err,
    Hello,
    Ok,
    Result,
    ShiftBuffer,
    decode,
    encode,
    format_wire_float,
    wire_float,
)
from bearingedge.signal import frame_direct


def test_push_worked_example_4x4():
    buf = ShiftBuffer(4, 4)
    letters = [float(i) for i in range(1, 17)]  # a..p as 1..16
    for v in letters:
        buf.push(v)
    # grid now holds p..a newest-first; push x and p falls off
    buf.push(99.0)
    expected = [
        [99.0, 16.0, 15.0, 14.0],
        [13.0, 12.0, 11.0, 10.0],
        [9.0, 8.0, 7.0, 6.0],
        [5.0, 4.0, 3.0, 2.0],
    ]
    assert buf.values.tolist() == expected


def test_push_into_empty_buffer():
    buf = ShiftBuffer(2, 2)
    buf.push(7.0)
    assert buf.values.tolist() == [[7.0, 0.0], [0.0, 0.0]]
    assert buf.fill_count == 1
    assert not buf.full


def test_full_buffer_reads_newest_first():
    buf = ShiftBuffer(3, 3)
    for v in range(1, 10):
        buf.push(float(v))
    assert buf.values.ravel().tolist() == [9.0, 8.0, 7.0, 6.0, 5.0,
                                           4.0, 3.0, 2.0, 1.0]
    assert buf.full
    buf.push(10.0)
    assert buf.fill_count == 9  # saturates at capacity


@pytest.mark.parametrize("rows,cols", [(2, 2), (4, 4), (20, 20)])
def test_shift_buffer_matches_deque_oracle(rows, cols):
    rng = np.random.default_rng(rows * 100 + cols)
    capacity = rows * cols
    for _ in range(200):
        n_pushes = int(rng.integers(0, 2 * capacity + 4))
        values = rng.uniform(-5, 5, n_pushes)
        buf = ShiftBuffer(rows, cols)
        oracle = deque(maxlen=capacity)
        for v in values:
            buf.push(float(v))
            oracle.appendleft(float(v))
        expected = list(oracle) + [0.0] * (capacity - len(oracle))
        assert buf.values.ravel().tolist() == expected


def test_to_frame_equals_frame_direct():
    rng = np.random.default_rng(3)
    samples = rng.uniform(0, 1, 400)
    buf = ShiftBuffer(20, 20)
    for v in samples:
        buf.push(float(v))
    frame = buf.to_frame()
    expected = frame_direct(samples, 20, 20, 0)
    assert np.array_equal(frame.values, expected.values)


def test_to_frame_2x2_hand_trace():
    buf = ShiftBuffer(2, 2)
    for v in (1.0, 2.0, 3.0, 4.0):
        buf.push(v)
    assert buf.to_frame().values.tolist() == [[1.0, 2.0], [3.0, 4.0]]


def test_to_frame_requires_full_buffer():
    buf = ShiftBuffer(2, 2)
    buf.push(1.0)
    with pytest.raises(BufferNotFull):
        buf.to_frame()


def test_encode_result_card_line():
    msg = Result(class_id=8, label="21-Ball", prob=0.999856, ticks=18)
    assert encode(msg) == "R 8 21-Ball 0.999856 18\n"


def test_decode_data():
    assert decode("D 0.500000\n") == Data(0.5)
    assert decode("D 0.5\r\n") == Data(0.5)  # CR tolerated


def test_decode_rejects_garbage():
    for line in ("D abc", "D", "D 1 2", "R 1 x", "HELLO v2 r=2 c=2 k=1",
                 "HELLO v1 r=2 c=2", "", "   ", "WHAT 3", "D nan", "D inf",
                 "D 1_0", "R 1 two words 0.5 3"):
        with pytest.raises(ParseError):
            decode(line)


def test_hello_roundtrip():
    msg = Hello(rows=20, cols=20, predict_every=10)
    assert encode(msg) == "HELLO v1 r=20 c=20 k=10\n"
    assert decode(encode(msg)) == msg


def test_simple_messages_roundtrip():
    for msg in (Ok(), Ack(), End(), Bye(), Err("phase", "DATA before HELLO"),
                Err("parse")):
        assert decode(encode(msg)) == msg


def test_wire_float_formatting():
    assert format_wire_float(0.0) == "0"
    assert format_wire_float(0.5) == "0.5"
    assert float(format_wire_float(1e-30)) == 1e-30
    assert float(format_wire_float(1e30)) == 1e30
    # at most nine significant digits, within 1e-9 relative
    x = 0.12345678901234
    s = format_wire_float(x)
    assert len(s.replace("0.", "")) <= 9
    assert abs(float(s) - x) <= 1e-9 * x


def _random_message(rng):
    kind = rng.integers(8)
    if kind == 0:
        return Hello(int(rng.integers(1, 100)), int(rng.integers(1, 100)),
                     int(rng.integers(1, 1000)))
    if kind == 1:
        return Ok()
    if kind == 2:
        mantissa = rng.uniform(-1, 1)
        exponent = int(rng.integers(-30, 31))
        return Data(mantissa * 10.0 ** exponent)
    if kind == 3:
        return Ack()
    if kind == 4:
        return Result(int(rng.integers(0, 10)),
                      str(rng.choice(["00-Normal", "21-Ball", "07-InnerRace"])),
                      float(rng.uniform(0, 1)), int(rng.integers(0, 10_000)))
    if kind == 5:
        return End()
    if kind == 6:
        return Bye()
    return Err(str(rng.choice(["parse", "phase", "range"])), "some detail")


def test_decode_encode_identity_randomized():
    rng = np.random.default_rng(17)
    for _ in range(2000):
        msg = _random_message(rng)
        line = encode(msg)
        assert len(line.encode("ascii")) <= 120
        assert line.endswith("\n") and "\n" not in line[:-1]
        assert decode(line) == msg


def _classifier(frame):
    return Result(class_id=3, label="07-OuterRace6", prob=0.75,
                  ticks=2)


def test_session_fills_then_predicts_k1():
    session = DeviceSession(_classifier)
    assert session.step(Hello(20, 20, 1)) == Ok()
    replies = [session.step(Data(0.5)) for _ in range(400)]
    assert all(isinstance(r, Ack) for r in replies[:399])
    assert isinstance(replies[399], Result)
    # once full, k=1 predicts on every sample
    assert isinstance(session.step(Data(0.5)), Result)


def test_session_data_before_hello():
    session = DeviceSession(_classifier)
    reply = session.step(Data(0.1))
    assert isinstance(reply, Err) and reply.code == "phase"
    assert session.state.phase == "awaiting-hello"


def test_session_k10_prediction_cadence():
    session = DeviceSession(_classifier)
    session.step(Hello(20, 20, 10))
    results = 0
    for i in range(1, 1001):
        reply = session.step(Data(0.25))
        if isinstance(reply, Result):
            results += 1
            assert i >= 400 and (i - 400) % 10 == 0
    assert results == 61  # first at 400, then every 10th sample


def test_session_end_and_afterlife():
    session = DeviceSession(_classifier)
    session.step(Hello(4, 4, 1))
    assert session.step(End()) == Bye()
    assert session.closed
    reply = session.step(Data(0.5))
    assert isinstance(reply, Err) and reply.code == "phase"


def test_session_double_hello_rejected():
    session = DeviceSession(_classifier)
    session.step(Hello(4, 4, 1))
    reply = session.step(Hello(4, 4, 1))
    assert isinstance(reply, Err) and reply.code == "phase"


def test_session_huge_hello_rejected():
    session = DeviceSession(_classifier)
    reply = session.step(Hello(60_000, 60_000, 1))
    assert isinstance(reply, Err) and reply.code == "range"


def test_session_frame_dims_guard():
    session = DeviceSession(_classifier, frame_dims=(20, 20))
    reply = session.step(Hello(4, 4, 1))
    assert isinstance(reply, Err) and reply.code == "range"
    assert session.step(Hello(20, 20, 1)) == Ok()


def test_session_always_replies_one_line_under_fuzz():
    rng = np.random.default_rng(99)
    session = DeviceSession(_classifier)
    for _ in range(1500):
        raw = bytes(rng.integers(0, 256, size=rng.integers(0, 60),
                                 dtype=np.uint8))
        reply = session.step_line(raw.decode("utf-8", errors="replace"))
        assert reply.endswith("\n") and reply.count("\n") == 1
        decode(reply)  # reply is itself grammatical


def test_session_replies_deterministic_for_fixed_trace():
    rng = np.random.default_rng(5)
    trace = ["HELLO v1 r=4 c=4 k=3\n"]
    trace += [f"D {format_wire_float(v)}\n" for v in rng.uniform(0, 1, 60)]
    trace += ["END\n"]

    def run():
        session = DeviceSession(_classifier)
        return [session.step_line(line) for line in trace]

    assert run() == run()


def test_wire_float_quantization_stable():
    rng = np.random.default_rng(23)
    for _ in range(500):
        x = rng.uniform(-1, 1) * 10.0 ** rng.integers(-20, 20)
        q = wire_float(x)
        assert wire_float(q) == q
        assert abs(q - x) <= 1e-9 * abs(x) + 5e-9 * abs(x)
