"""Host <-> device line protocol and the device-side shift-register buffer.

Wire grammar, one newline-terminated ASCII line per message:

    HELLO v1 r=<int> c=<int> k=<int>      session open, frame dims, cadence
    OK                                    HELLO accepted
    D <float>                             one normalized sample
    A                                     sample absorbed, no prediction
    R <int> <label> <prob> <int>          class id, label, prob, ticks
    END                                   host is done
    BYE                                   device closing
    ERR <code> <text>                     refused or unparseable input

Every message fits one line of at most 120 bytes. Sample values are written
as the shortest decimal that reparses within 1e-9 relative error, capped at
nine significant digits; probabilities carry exactly six decimals. Message
constructors snap float fields onto that wire grid, so decode(encode(m))
reproduces m exactly.

Flow control is lockstep: the host sends the next line only after reading
the reply to the previous one.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import BufferNotFull, ParseError
from .signal import Frame

MAX_LINE_BYTES = 120
PROTOCOL_VERSION = "v1"

_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][+-]?[0-9]+)?$")
_TOKEN_RE = re.compile(r"^[\x21-\x7e]+$")  # printable, no whitespace


def format_wire_float(x: float) -> str:
    """Shortest decimal within 1e-9 relative of x, at most 9 sig digits.

    Exact reparses win over merely-close ones so that values already on the
    wire grid format back to themselves.
    """
    if not math.isfinite(x):
        raise ValueError("wire floats must be finite")
    if x == 0.0:
        return "0"
    candidates = [f"{x:.{d}g}" for d in range(1, 10)]
    for s in candidates:
        if float(s) == x:
            return s
    for s in candidates:
        if abs(float(s) - x) <= 1e-9 * abs(x):
            return s
    return candidates[-1]


def wire_float(x: float) -> float:
    """Snap a value onto the wire grid (what a receiver will reconstruct)."""
    return float(format_wire_float(float(x)))


@dataclass(frozen=True)
class Hello:
    rows: int
    cols: int
    predict_every: int  # k: samples between predictions once the buffer fills

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.predict_every < 1:
            raise ValueError("HELLO fields must be positive")


@dataclass(frozen=True)
class Ok:
    pass


@dataclass(frozen=True)
class Data:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", wire_float(self.value))


@dataclass(frozen=True)
class Ack:
    pass


@dataclass(frozen=True)
class Result:
    class_id: int
    label: str
    prob: float
    ticks: int

    def __post_init__(self):
        if self.class_id < 0 or self.ticks < 0:
            raise ValueError("class_id and ticks must be non-negative")
        if not _TOKEN_RE.match(self.label):
            raise ValueError("label must be printable and whitespace-free")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("prob must lie in [0, 1]")
        object.__setattr__(self, "prob", float(f"{self.prob:.6f}"))


@dataclass(frozen=True)
class End:
    pass


@dataclass(frozen=True)
class Bye:
    pass


@dataclass(frozen=True)
class Err:
    code: str
    text: str = ""

    def __post_init__(self):
        if not _TOKEN_RE.match(self.code):
            raise ValueError("ERR code must be a printable token")
        # keep replies single-line, single-spaced, within the length budget
        clean = "".join(c if 0x20 <= ord(c) < 0x7F else "?" for c in self.text)
        object.__setattr__(self, "text", " ".join(clean[:80].split()))


ProtocolMessage = Union[Hello, Ok, Data, Ack, Result, End, Bye, Err]


def encode(msg: ProtocolMessage) -> str:
    """Serialize to one newline-terminated line."""
    if isinstance(msg, Hello):
        line = (f"HELLO {PROTOCOL_VERSION} r={msg.rows} c={msg.cols} "
                f"k={msg.predict_every}")
    elif isinstance(msg, Ok):
        line = "OK"
    elif isinstance(msg, Data):
        line = f"D {format_wire_float(msg.value)}"
    elif isinstance(msg, Ack):
        line = "A"
    elif isinstance(msg, Result):
        line = f"R {msg.class_id} {msg.label} {msg.prob:.6f} {msg.ticks}"
    elif isinstance(msg, End):
        line = "END"
    elif isinstance(msg, Bye):
        line = "BYE"
    elif isinstance(msg, Err):
        line = f"ERR {msg.code} {msg.text}".rstrip()
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    encoded = line + "\n"
    if len(encoded.encode("ascii")) > MAX_LINE_BYTES:
        raise ValueError(f"line exceeds {MAX_LINE_BYTES} bytes: {line!r}")
    return encoded


def _parse_int(token: str, what: str) -> int:
    if not _INT_RE.match(token):
        raise ParseError(f"bad {what} {token!r}")
    return int(token)


def _parse_float(token: str, what: str) -> float:
    if not _FLOAT_RE.match(token):
        raise ParseError(f"bad {what} {token!r}")
    return float(token)


def decode(line: str) -> ProtocolMessage:
    """Parse one line (trailing CR/LF tolerated) into a message."""
    stripped = line.rstrip("\r\n")
    if "\n" in stripped or "\r" in stripped:
        raise ParseError("message must be a single line")
    tokens = stripped.split(" ")
    tokens = [t for t in tokens if t != ""]
    if not tokens:
        raise ParseError("empty line")
    head = tokens[0]
    try:
        if head == "HELLO":
            if (len(tokens) != 5 or tokens[1] != PROTOCOL_VERSION
                    or not tokens[2].startswith("r=")
                    or not tokens[3].startswith("c=")
                    or not tokens[4].startswith("k=")):
                raise ParseError(f"malformed HELLO: {stripped!r}")
            return Hello(
                rows=_parse_int(tokens[2][2:], "rows"),
                cols=_parse_int(tokens[3][2:], "cols"),
                predict_every=_parse_int(tokens[4][2:], "k"),
            )
        if head == "OK" and len(tokens) == 1:
            return Ok()
        if head == "D" and len(tokens) == 2:
            return Data(_parse_float(tokens[1], "sample"))
        if head == "A" and len(tokens) == 1:
            return Ack()
        if head == "R" and len(tokens) == 5:
            return Result(
                class_id=_parse_int(tokens[1], "class id"),
                label=tokens[2],
                prob=_parse_float(tokens[3], "prob"),
                ticks=_parse_int(tokens[4], "ticks"),
            )
        if head == "END" and len(tokens) == 1:
            return End()
        if head == "BYE" and len(tokens) == 1:
            return Bye()
        if head == "ERR" and len(tokens) >= 2:
            return Err(code=tokens[1], text=" ".join(tokens[2:]))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unrecognized message {stripped!r}")


class ShiftBuffer:
    """The device's rows x cols shift-register frame buffer.

    A new sample enters at [0][0] and every element moves one slot right,
    the rightmost element of each row wrapping to the leftmost slot of the
    next; the rightmost element of the last row falls off. In the row-major
    flat view that whole dance is a single shift by one, which is how it is
    implemented; the grid therefore reads newest-first.
    """

    def __init__(self, rows: int = 20, cols: int = 20):
        if rows < 1 or cols < 1:
            raise ValueError("rows and cols must be positive")
        self.rows = rows
        self.cols = cols
        self._flat = np.zeros(rows * cols)
        self.fill_count = 0

    @property
    def capacity(self) -> int:
        return self.rows * self.cols

    @property
    def full(self) -> bool:
        return self.fill_count >= self.capacity

    @property
    def values(self) -> np.ndarray:
        return self._flat.reshape(self.rows, self.cols).copy()

    def push(self, x: float) -> None:
        if not math.isfinite(x):
            raise ValueError("buffer samples must be finite")
        self._flat[1:] = self._flat[:-1]
        self._flat[0] = x
        self.fill_count = min(self.fill_count + 1, self.capacity)

    def to_frame(self) -> Frame:
        """Reorder into the canonical oldest-at-[0][0] training orientation."""
        if not self.full:
            raise BufferNotFull(
                f"buffer holds {self.fill_count}/{self.capacity} samples"
            )
        return Frame(self._flat[::-1].reshape(self.rows, self.cols))


PHASE_AWAITING_HELLO = "awaiting-hello"
PHASE_STREAMING = "streaming"
PHASE_CLOSED = "closed"

# A HELLO asking for more buffer cells than this is refused outright.
MAX_BUFFER_CELLS = 262_144


@dataclass(frozen=True)
class SessionState:
    phase: str
    samples_since_predict: int
    predict_every: int


class DeviceSession:
    """One device-side session: a state machine answering one line per line.

    ``classifier`` maps a Frame to a Result; it runs whenever the buffer is
    full and ``predict_every`` samples have arrived since the last
    prediction (the fill-up itself counts, so with a 400-cell buffer the
    400th sample always triggers the first prediction).
    """

    def __init__(self, classifier: Callable[[Frame], Result],
                 frame_dims: tuple[int, int] | None = None):
        self.classifier = classifier
        self.frame_dims = frame_dims  # require HELLO to match, when set
        self.state = SessionState(PHASE_AWAITING_HELLO, 0, 1)
        self.buffer: ShiftBuffer | None = None

    @property
    def closed(self) -> bool:
        return self.state.phase == PHASE_CLOSED

    def step_line(self, line: str) -> str:
        """Handle one raw line; always returns exactly one reply line."""
        try:
            msg = decode(line)
        except ParseError as exc:
            return encode(Err("parse", str(exc)))
        return encode(self.step(msg))

    def step(self, msg: ProtocolMessage) -> ProtocolMessage:
        """Advance the state machine; every message earns exactly one reply."""
        if self.state.phase == PHASE_CLOSED:
            return Err("phase", "session closed")
        if isinstance(msg, End):
            self.state = SessionState(PHASE_CLOSED, 0,
                                      self.state.predict_every)
            return Bye()
        if self.state.phase == PHASE_AWAITING_HELLO:
            if isinstance(msg, Hello):
                return self._open(msg)
            return Err("phase", f"{type(msg).__name__} before HELLO")
        if isinstance(msg, Data):
            return self._absorb(msg)
        return Err("phase", f"unexpected {type(msg).__name__} while streaming")

    def _open(self, msg: Hello) -> ProtocolMessage:
        if msg.rows * msg.cols > MAX_BUFFER_CELLS:
            return Err("range", "requested buffer too large")
        if self.frame_dims is not None and (msg.rows, msg.cols) != self.frame_dims:
            want = f"{self.frame_dims[0]}x{self.frame_dims[1]}"
            return Err("range", f"model expects {want} frames")
        self.buffer = ShiftBuffer(msg.rows, msg.cols)
        self.state = SessionState(PHASE_STREAMING, 0, msg.predict_every)
        return Ok()

    def _absorb(self, msg: Data) -> ProtocolMessage:
        self.buffer.push(msg.value)
        pending = self.state.samples_since_predict + 1
        if self.buffer.full and pending >= self.state.predict_every:
            result = self.classifier(self.buffer.to_frame())
            self.state = SessionState(PHASE_STREAMING, 0,
                                      self.state.predict_every)
            return result
        self.state = SessionState(PHASE_STREAMING, pending,
                                  self.state.predict_every)
        return Ack()
