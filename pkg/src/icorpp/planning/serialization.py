"""Versioned text format for solved policies.

::

    icorpp-policy 1
    kind mdp            (or alpha)
    model_hash <sha256>
    gamma <float>
    actions <n>
    <one action name per line>
    rows <k>
    <mdp: action_id value>      (one line per state)
    <alpha: action_id v_1 ... v_S>
"""
from __future__ import annotations

import numpy as np

from .mdp import MdpPolicy
from .pbvi import AlphaVectorPolicy

MAGIC = "icorpp-policy"
VERSION = 1


class PolicyFormatError(ValueError):
    pass


def dump_policy(policy) -> str:
    if isinstance(policy, MdpPolicy):
        kind = "mdp"
        rows = [f"{int(a)} {v!r}" for a, v in zip(policy.actions, map(float, policy.values))]
    elif isinstance(policy, AlphaVectorPolicy):
        kind = "alpha"
        rows = [" ".join([str(int(a))] + [repr(float(x)) for x in vec])
                for a, vec in zip(policy.actions, policy.alphas)]
    else:
        raise TypeError(f"cannot serialise {type(policy).__name__}")
    lines = [f"{MAGIC} {VERSION}", f"kind {kind}", f"model_hash {policy.model_hash}",
             f"gamma {policy.gamma!r}", f"actions {len(policy.action_names)}"]
    lines += list(policy.action_names)
    lines += [f"rows {len(rows)}"] + rows
    return "\n".join(lines) + "\n"


def load_policy_text(text: str, model_hash: str = None):
    lines = text.splitlines()
    try:
        magic, version = lines[0].split()
        if magic != MAGIC:
            raise PolicyFormatError("not a policy file")
        if int(version) != VERSION:
            raise PolicyFormatError(f"unsupported policy format version {version}")
        kind = lines[1].split()[1]
        parts = lines[2].split()
        stored_hash = parts[1] if len(parts) > 1 else ""
        gamma = float(lines[3].split()[1])
        n_act = int(lines[4].split()[1])
        names = tuple(lines[5:5 + n_act])
        n_rows = int(lines[5 + n_act].split()[1])
        rows = [l.split() for l in lines[6 + n_act:6 + n_act + n_rows]]
    except (IndexError, ValueError) as e:
        if isinstance(e, PolicyFormatError):
            raise
        raise PolicyFormatError(f"malformed policy file: {e}") from e
    if model_hash is not None and stored_hash != model_hash:
        raise PolicyFormatError(
            f"policy was solved for model {stored_hash[:12]}, not {model_hash[:12]}")
    if kind == "mdp":
        acts = np.array([int(r[0]) for r in rows])
        vals = np.array([float(r[1]) for r in rows])
        return MdpPolicy(acts, vals, gamma, names, stored_hash)
    if kind == "alpha":
        acts = np.array([int(r[0]) for r in rows])
        alphas = np.array([[float(x) for x in r[1:]] for r in rows])
        return AlphaVectorPolicy(alphas, acts, gamma, names, stored_hash)
    raise PolicyFormatError(f"unknown policy kind {kind!r}")


def save_policy(path, policy):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_policy(policy))


def load_policy(path, model=None):
    """Read a policy; with ``model`` given, refuse a file solved for a different model."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    pol = load_policy_text(text, None if model is None else model.model_hash)
    if model is not None and hasattr(pol, "attach"):
        pol.attach(model)
    return pol
