"""Engine-side stdio server for the line-delimited JSON wire protocol.

One JSON object per line in both directions. Requests carry a strictly
increasing integer "id" echoed in the response:

    {"id": 0, "cmd": "spec"}
    {"id": 1, "cmd": "reset", "seed": 0}
    {"id": 2, "cmd": "step", "action": [0.5]}
    {"id": 3, "cmd": "close"}

Step responses expose the augmented observation (safety state appended as
the final component), the shaped cost, the done flag, and an info object
whose keys are the wrapper's wire contract: "true_cost", "safety_cost",
"next_safe_state". Protocol violations (bad id, step before reset, step
after done) produce {"id": ..., "error": "..."} responses; the episode
state is left untouched so the client can recover.
"""

from __future__ import annotations

import json
from typing import Callable, TextIO

import numpy as np

from . import __version__
from .saute import SauteEnv

__all__ = ["serve"]


def _spec_payload(env: SauteEnv) -> dict:
    spec = env.spec
    action_space = spec.action_space
    if hasattr(action_space, "n"):
        action = {"type": "discrete", "n": action_space.n}
    else:
        action = {
            "type": "box",
            "lower": list(action_space.lower),
            "upper": list(action_space.upper),
        }
    return {
        "engine_version": __version__,
        "observation_dim": spec.state_dim,
        "action_space": action,
        "budget_d": env.cfg.budget_d,
        "gamma_l": env.cfg.gamma_l,
        "gamma_c": spec.gamma_c,
        "horizon": spec.horizon,
        "normalize": env.cfg.normalize,
        "reshape_n": env.cfg.reshape_n,
        "mode": env.cfg.mode.value,
    }


def serve(make_env: Callable[[], SauteEnv], stdin: TextIO, stdout: TextIO) -> None:
    """Serve one environment instance until "close" or EOF."""
    env = make_env()
    last_id = -1
    episode_open = False
    episode_done = False

    def send(payload: dict) -> None:
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            send({"id": None, "error": f"malformed request: {exc.msg}"})
            continue
        msg_id = msg.get("id")
        if not isinstance(msg_id, int) or msg_id <= last_id:
            send({"id": msg_id, "error": f"id must be an integer above {last_id}"})
            continue
        last_id = msg_id
        cmd = msg.get("cmd")
        if cmd == "spec":
            send({"id": msg_id, "spec": _spec_payload(env)})
        elif cmd == "reset":
            seed = msg.get("seed")
            if not isinstance(seed, int):
                send({"id": msg_id, "error": "reset requires an integer seed"})
                continue
            obs = env.reset(seed=seed)
            episode_open = True
            episode_done = False
            send({"id": msg_id, "obs": [float(x) for x in obs]})
        elif cmd == "step":
            if not episode_open:
                send({"id": msg_id, "error": "step before reset"})
                continue
            if episode_done:
                send({"id": msg_id, "error": "step after episode end"})
                continue
            action = msg.get("action")
            if action is None:
                send({"id": msg_id, "error": "step requires an action"})
                continue
            obs, cost, _, done, info = env.step(np.asarray(action, dtype=float))
            episode_done = bool(done)
            send(
                {
                    "id": msg_id,
                    "obs": [float(x) for x in obs],
                    "cost": float(cost),
                    "done": bool(done),
                    "info": {
                        "true_cost": info["true_cost"],
                        "safety_cost": info["safety_cost"],
                        "next_safe_state": info["next_safe_state"],
                    },
                }
            )
        elif cmd == "close":
            send({"id": msg_id, "ok": True})
            return
        else:
            send({"id": msg_id, "error": f"unknown cmd {cmd!r}"})
