"""Host streamer: normalizes a recording and feeds it to a device in lockstep.

Also home of the end-to-end runner, which wires a host and an in-process
device together over a socket pair and scores streaming accuracy per class.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .device import Device, DiagnosisRecord
from .errors import HandshakeFailed, PeerError
from .protocol import Ack, Bye, Data, End, Hello, Err, Ok, Result, decode, encode
from .signal import (
    FAULT_CLASSES,
    FRAME_COLS,
    FRAME_ROWS,
    NUM_CLASSES,
    Recording,
    generate_synthetic,
    normalize,
)


@dataclass(frozen=True)
class StreamSummary:
    samples_sent: int
    records: tuple[DiagnosisRecord, ...]
    histogram: dict[str, int]
    mean_ticks: float

    @property
    def predictions(self) -> int:
        return len(self.records)


def _send(wfile, msg) -> None:
    wfile.write(encode(msg).encode("ascii"))
    wfile.flush()


def _recv(rfile):
    raw = rfile.readline(65536)
    if not raw:
        return None
    return decode(raw.decode("utf-8", errors="replace"))


def stream_samples(rfile, wfile, samples, k: int = 1,
                   rows: int = FRAME_ROWS, cols: int = FRAME_COLS,
                   rate: float | None = None) -> StreamSummary:
    """Stream normalized samples over an open transport, lockstep.

    ``rate`` caps throughput in samples per second; None streams flat out.
    Raises HandshakeFailed when HELLO is not answered with OK, PeerError on
    any ERR reply.
    """
    _send(wfile, Hello(rows=rows, cols=cols, predict_every=k))
    reply = _recv(rfile)
    if isinstance(reply, Err):
        raise HandshakeFailed(f"device refused session: [{reply.code}] {reply.text}")
    if not isinstance(reply, Ok):
        raise HandshakeFailed(f"expected OK, got {reply!r}")

    delay = (1.0 / rate) if rate else 0.0
    records: list[DiagnosisRecord] = []
    sent = 0
    for value in samples:
        _send(wfile, Data(float(value)))
        sent += 1
        reply = _recv(rfile)
        if isinstance(reply, Ack):
            pass
        elif isinstance(reply, Result):
            records.append(DiagnosisRecord(
                class_id=reply.class_id,
                label=reply.label,
                prob=reply.prob,
                ticks=reply.ticks,
            ))
        elif isinstance(reply, Err):
            raise PeerError(reply.code, reply.text)
        else:
            raise PeerError("protocol", f"unexpected reply {reply!r}")
        if delay:
            time.sleep(delay)
    _send(wfile, End())
    reply = _recv(rfile)  # BYE expected; EOF tolerated
    if reply is not None and not isinstance(reply, Bye):
        raise PeerError("protocol", f"expected BYE, got {reply!r}")

    histogram = Counter(r.label for r in records)
    mean_ticks = float(np.mean([r.ticks for r in records])) if records else 0.0
    return StreamSummary(
        samples_sent=sent,
        records=tuple(records),
        histogram=dict(histogram),
        mean_ticks=mean_ticks,
    )


def stream_recording(rfile, wfile, recording: Recording, k: int = 1,
                     rate: float | None = None) -> StreamSummary:
    """Normalize a recording with its own min/max, then stream it."""
    normalized, _params = normalize(recording)
    return stream_samples(rfile, wfile, normalized, k=k, rate=rate)


def host_stream(endpoint: tuple[str, int], recording: Recording, k: int = 1,
                rate: float | None = None, timeout: float = 10.0) -> StreamSummary:
    """Connect to a device over TCP and stream one recording."""
    try:
        conn = socket.create_connection(endpoint, timeout=timeout)
    except OSError as exc:
        raise HandshakeFailed(f"cannot reach {endpoint[0]}:{endpoint[1]}: {exc}")
    with conn, conn.makefile("rb") as rfile, conn.makefile("wb") as wfile:
        return stream_recording(rfile, wfile, recording, k=k, rate=rate)


def format_stream_summary(summary: StreamSummary) -> str:
    lines = [
        f"samples sent   : {summary.samples_sent}",
        f"predictions    : {summary.predictions}",
        f"mean ticks     : {summary.mean_ticks:.1f}",
    ]
    for label in sorted(summary.histogram):
        lines.append(f"  {label:<16} {summary.histogram[label]}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ClassRunResult:
    class_id: int
    label: str
    predictions: int
    counted: int  # predictions scored (first one per session is warm-up)
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.counted if self.counted else 0.0


@dataclass(frozen=True)
class E2eSummary:
    per_class: tuple[ClassRunResult, ...]
    overall_accuracy: float
    total_predictions: int

    def deterministic_fields(self):
        """Everything except timing, for run-to-run comparisons."""
        return (
            tuple((c.class_id, c.predictions, c.counted, c.correct)
                  for c in self.per_class),
            self.overall_accuracy,
        )


def _run_device_session(device: Device, conn) -> None:
    with conn, conn.makefile("rb") as rfile, conn.makefile("wb") as wfile:
        device.run_session(rfile, wfile)


def e2e_run(device: Device, k: int = 10, seed: int = 9000,
            samples_per_class: int = 1000) -> E2eSummary:
    """Stream one held-out synthetic recording per class through a device.

    Each class gets its own session (fresh buffer), connected over an
    in-process socket pair. The first prediction of every session is
    excluded from scoring as warm-up.
    """
    per_class = []
    total_correct = 0
    total_counted = 0
    for class_id in range(NUM_CLASSES):
        recording = generate_synthetic(class_id, samples_per_class, seed=seed)
        host_sock, device_sock = socket.socketpair()
        worker = threading.Thread(
            target=_run_device_session, args=(device, device_sock), daemon=True)
        worker.start()
        with host_sock, host_sock.makefile("rb") as rfile, \
                host_sock.makefile("wb") as wfile:
            summary = stream_recording(rfile, wfile, recording, k=k)
        worker.join(timeout=30.0)

        scored = summary.records[1:]
        correct = sum(1 for r in scored if r.class_id == class_id)
        per_class.append(ClassRunResult(
            class_id=class_id,
            label=FAULT_CLASSES[class_id].name,
            predictions=summary.predictions,
            counted=len(scored),
            correct=correct,
        ))
        total_correct += correct
        total_counted += len(scored)

    return E2eSummary(
        per_class=tuple(per_class),
        overall_accuracy=total_correct / total_counted if total_counted else 0.0,
        total_predictions=sum(c.predictions for c in per_class),
    )


def format_e2e_summary(summary: E2eSummary) -> str:
    lines = ["class            predictions  scored  correct  accuracy"]
    for c in summary.per_class:
        lines.append(
            f"{c.label:<16} {c.predictions:>11}  {c.counted:>6}  "
            f"{c.correct:>7}  {c.accuracy:>8.3f}"
        )
    lines.append(f"overall streaming accuracy: {summary.overall_accuracy:.4f}")
    return "\n".join(lines) + "\n"
