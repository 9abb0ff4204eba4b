"""Gym-style adapter over the engine's line-delimited JSON stdio bridge.

The adapter spawns the engine binary as a long-lived child process and
talks one JSON object per line. Requests carry a strictly increasing
integer id; every response echoes it. The child is the authoritative
environment; this side holds no environment state beyond the protocol
bookkeeping, which is what makes the adapter a faithful stand-in for
plugging the engine into external RL code.

Example transcript (one line each way per call):

    -> {"id": 0, "cmd": "spec"}
    <- {"id": 0, "spec": {"engine_version": "0.1.0", ...}}
    -> {"id": 1, "cmd": "reset", "seed": 0}
    <- {"id": 1, "obs": [-0.99657, 0.08268, -0.03584, 1.0]}
    -> {"id": 2, "cmd": "step", "action": [0.5]}
    <- {"id": 2, "obs": [...], "cost": 0.3954, "done": false,
        "info": {"true_cost": 0.3954, "safety_cost": 0.0,
                 "next_safe_state": 1.0}}
    -> {"id": 3, "cmd": "close"}
    <- {"id": 3, "ok": true}
"""

from __future__ import annotations

import json
import subprocess

__all__ = ["BridgeAdapter", "BridgeProtocolError", "bridge_serve"]

INFO_KEYS = ("true_cost", "safety_cost", "next_safe_state")


class BridgeProtocolError(RuntimeError):
    """Protocol desync or child failure; carries the last raw line seen."""

    def __init__(self, message: str, raw_line: str | None = None):
        super().__init__(message if raw_line is None else f"{message}; last line: {raw_line!r}")
        self.raw_line = raw_line


class BridgeAdapter:
    """reset/step over a child engine process."""

    def __init__(self, engine_cmd: list[str]):
        self._proc = subprocess.Popen(
            engine_cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._next_id = 0
        self._closed = False

    def _rpc(self, request: dict) -> dict:
        if self._closed:
            raise BridgeProtocolError("adapter already closed")
        request = {"id": self._next_id, **request}
        self._next_id += 1
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
            line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeProtocolError(f"child process pipe failed: {exc}") from exc
        if not line:
            code = self._proc.poll()
            raise BridgeProtocolError(f"child process closed the stream (exit code {code})")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"unparseable response: {exc.msg}", raw_line=line)
        if response.get("id") != request["id"]:
            raise BridgeProtocolError(
                f"response id {response.get('id')} does not echo request id {request['id']}",
                raw_line=line,
            )
        if "error" in response:
            raise BridgeProtocolError(f"engine error: {response['error']}", raw_line=line)
        return response

    def spec(self) -> dict:
        return self._rpc({"cmd": "spec"})["spec"]

    def reset(self, seed: int) -> list[float]:
        return self._rpc({"cmd": "reset", "seed": int(seed)})["obs"]

    def step(self, action) -> tuple[list[float], float, bool, dict]:
        if hasattr(action, "tolist"):
            action = action.tolist()
        if not isinstance(action, (list, tuple)):
            action = [action]
        response = self._rpc({"cmd": "step", "action": list(action)})
        return response["obs"], response["cost"], response["done"], response["info"]

    def close(self) -> None:
        if self._closed:
            return
        try:
            self._rpc({"cmd": "close"})
        finally:
            self._closed = True
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "BridgeAdapter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def bridge_serve(engine_binary: str, env_config: str) -> BridgeAdapter:
    """Spawn the engine's bridge mode for the given environment config."""
    return BridgeAdapter([engine_binary, "bridge", "--config", env_config])
