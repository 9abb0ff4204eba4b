"""Differential conformance checks: bridge outputs vs the native engine.

For the same seed and action sequence, every observation, cost, done flag,
and info field crossing the wire must equal the in-process engine's output
exactly (floats serialize with round-trip-exact formatting on both sides,
so equality is bitwise). Field names are compared character-exactly
against the wire contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

import sautemdp
from sautemdp.saute import SauteEnv

from .adapter import INFO_KEYS, BridgeAdapter, BridgeProtocolError

__all__ = ["ConformanceResult", "conformance_suite", "scripted_actions"]


@dataclass
class ConformanceResult:
    passed: bool
    checks: dict[str, bool]
    failures: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"{name}: {'ok' if ok else 'FAIL'}" for name, ok in self.checks.items()]
        lines += self.failures
        return "\n".join(lines)


def scripted_actions(count: int, lower: float, upper: float, seed: int = 0) -> np.ndarray:
    """Deterministic action script shared by both sides of the diff."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.uniform(lower, upper, size=count)


def conformance_suite(
    adapter: BridgeAdapter,
    native_env: SauteEnv,
    total_steps: int = 1000,
    seed: int = 0,
) -> ConformanceResult:
    """Run the full check list against a live adapter.

    Episodes restart on done until total_steps steps have been compared.
    """
    checks: dict[str, bool] = {}
    failures: list[str] = []

    spec = adapter.spec()
    checks["engine version match"] = spec.get("engine_version") == sautemdp.__version__
    if not checks["engine version match"]:
        failures.append(
            f"engine version {spec.get('engine_version')!r} != client-side "
            f"native version {sautemdp.__version__!r}"
        )

    # reset determinism across the wire
    obs_a = adapter.reset(seed=seed)
    obs_b = adapter.reset(seed=seed)
    checks["reset determinism"] = obs_a == obs_b

    lower = spec["action_space"]["lower"][0]
    upper = spec["action_space"]["upper"][0]
    actions = scripted_actions(total_steps, lower, upper, seed=seed)

    diff_ok = True
    names_ok = True
    z_ok = True
    episode_seed = seed
    bridge_obs = adapter.reset(seed=episode_seed)
    native_obs = native_env.reset(seed=episode_seed)
    if list(native_obs) != bridge_obs:
        diff_ok = False
        failures.append("reset observation mismatch")
    steps_done = 0
    while steps_done < total_steps:
        action = [float(actions[steps_done])]
        b_obs, b_cost, b_done, b_info = adapter.step(action)
        n_obs, n_cost, _, n_done, n_info = native_env.step(np.asarray(action))
        if tuple(sorted(b_info)) != tuple(sorted(INFO_KEYS)):
            names_ok = False
            failures.append(f"info keys {sorted(b_info)} != {sorted(INFO_KEYS)}")
            break
        same = (
            b_obs == list(map(float, n_obs))
            and b_cost == float(n_cost)
            and b_done == bool(n_done)
            and all(b_info[k] == float(n_info[k]) for k in INFO_KEYS)
        )
        if not same:
            diff_ok = False
            failures.append(f"step {steps_done}: bridge != native")
            break
        z = b_info["next_safe_state"]
        if z > 1.0 + 1e-12:
            z_ok = False
            failures.append(f"step {steps_done}: normalized z above 1 ({z})")
        steps_done += 1
        if b_done and steps_done < total_steps:
            episode_seed += 1
            bridge_obs = adapter.reset(seed=episode_seed)
            native_obs = native_env.reset(seed=episode_seed)
            if list(native_obs) != bridge_obs:
                diff_ok = False
                failures.append(f"reset observation mismatch at step {steps_done}")
                break

    checks[f"differential equality over {total_steps} steps"] = diff_ok
    checks["info field names character-exact"] = names_ok
    checks["safety state range"] = z_ok

    # protocol guard: stepping a finished episode must surface an error
    guard_env_done = False
    try:
        adapter.reset(seed=seed)
        for _ in range(native_env.spec.horizon):
            _, _, done, _ = adapter.step([0.0])
            if done:
                break
        adapter.step([0.0])
    except BridgeProtocolError:
        guard_env_done = True
    checks["step-after-done surfaces protocol error"] = guard_env_done

    passed = all(checks.values())
    return ConformanceResult(passed=passed, checks=checks, failures=failures)
