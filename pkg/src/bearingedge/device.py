"""Device simulator: serves diagnosis sessions over a line transport.

Stands in for the microcontroller end of the wire: it loads a trained model,
answers the session protocol, and prints a three-line result card per
diagnosis in place of the device's LCD panel.
"""

from __future__ import annotations

import socket
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import network
from .model import Architecture, ModelParams, load_model
from .protocol import DeviceSession, Result, decode
from .signal import FAULT_CLASSES, Frame


@dataclass(frozen=True)
class DeviceConfig:
    model_path: Path
    host: str = "127.0.0.1"
    port: int = 9430
    tick_unit_ms: float = 1.0  # milliseconds per reported tick
    max_sessions: int = 0  # 0 = serve until interrupted

    def __post_init__(self):
        if self.tick_unit_ms <= 0:
            raise ValueError("tick_unit_ms must be positive")


@dataclass(frozen=True)
class DiagnosisRecord:
    class_id: int
    label: str
    prob: float
    ticks: int
    timestamp: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc))


def render_result_card(result: Result) -> str:
    """The fixed three-line card scripts downstream may parse."""
    return (
        f"Fault: {result.label}\n"
        f"Prob : {result.prob:.6f}\n"
        f"Time : {result.ticks} ticks\n"
    )


class Device:
    """Holds a loaded model and classifies frames with wall-clock timing."""

    def __init__(self, arch: Architecture, params: ModelParams,
                 tick_unit_ms: float = 1.0, out=None):
        self.arch = arch
        self.params = params
        self.tick_unit_ms = tick_unit_ms
        self.out = out if out is not None else sys.stdout

    @classmethod
    def from_file(cls, model_path, tick_unit_ms: float = 1.0, out=None):
        arch, params = load_model(model_path)  # CorruptModel stops startup
        return cls(arch, params, tick_unit_ms, out)

    def classify(self, frame: Frame) -> Result:
        t0 = time.perf_counter()
        class_id, probs = network.predict(self.arch, self.params, frame.values)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return Result(
            class_id=class_id,
            label=FAULT_CLASSES[class_id].name,
            prob=float(probs[class_id]),
            ticks=round(elapsed_ms / self.tick_unit_ms),
        )

    def new_session(self) -> DeviceSession:
        rows, cols, _ = self.arch.input_dims
        return DeviceSession(self.classify, frame_dims=(rows, cols))

    def run_session(self, rfile, wfile) -> int:
        """Serve one session on binary file objects; returns diagnoses made.

        Oversized or undecodable lines become ERR replies, never crashes;
        EOF ends the session.
        """
        session = self.new_session()
        diagnoses = 0
        while True:
            raw = rfile.readline(65536)
            if not raw:
                break
            reply = session.step_line(raw.decode("utf-8", errors="replace"))
            wfile.write(reply.encode("ascii"))
            wfile.flush()
            if reply.startswith("R "):
                diagnoses += 1
                self.out.write(render_result_card(decode_result(reply)))
                self.out.flush()
            if session.closed:
                break
        return diagnoses


def decode_result(line: str) -> Result:
    msg = decode(line)
    assert isinstance(msg, Result)
    return msg


def serve(cfg: DeviceConfig, out=None, ready_callback=None) -> int:
    """Listen on TCP and serve sessions one at a time; returns session count.

    Transport errors end the affected session, not the server. With
    ``max_sessions`` zero the loop runs until interrupted.
    """
    device = Device.from_file(cfg.model_path, cfg.tick_unit_ms, out)
    served = 0
    with socket.create_server((cfg.host, cfg.port)) as listener:
        if ready_callback is not None:
            ready_callback(listener.getsockname())
        while cfg.max_sessions == 0 or served < cfg.max_sessions:
            conn, _addr = listener.accept()
            try:
                with conn, conn.makefile("rb") as rfile, \
                        conn.makefile("wb") as wfile:
                    device.run_session(rfile, wfile)
            except OSError as exc:
                print(f"session aborted: {exc}", file=sys.stderr)
            served += 1
    return served
