"""Random (header, subscription set) cases for matcher-vs-oracle checks."""

import random

from sealmr.router import Constraint, Op, Subscription, SubscriptionStore
from sealmr.wire import MessageType

NAMES = ["msg_type", "job_id", "dest_id", "slot", "stream", "iteration", "worker_id"]
OPS = ["EQ", "LT", "LE", "GT", "GE"]
TYPES = [int(m) for m in MessageType]


def _value(rng, name):
    if name == "msg_type":
        return rng.choice(TYPES)
    if name in ("job_id", "stream", "worker_id"):
        # occasionally an int, to exercise type mismatches
        return rng.choice(["a", "b", "c", "MAP", "REDUCE"]) if rng.random() < 0.9 else rng.randint(0, 3)
    return rng.randint(0, 4) if rng.random() < 0.9 else rng.choice(["0", "x"])


def random_header(rng):
    h = {"msg_type": rng.choice(TYPES)}
    for name in rng.sample(NAMES[1:], rng.randint(0, 4)):
        h[name] = _value(rng, name)
    return h


def random_subs(rng, n_subs=None, n_owners=6):
    subs = []
    for i in range(n_subs if n_subs is not None else rng.randint(0, 12)):
        cons = []
        if rng.random() < 0.8:
            cons.append(("msg_type", "EQ" if rng.random() < 0.85 else rng.choice(OPS), rng.choice(TYPES)))
        for name in rng.sample(NAMES[1:], rng.randint(0 if cons else 1, 3)):
            cons.append((name, rng.choice(OPS), _value(rng, name)))
        subs.append((i + 1, f"o{rng.randrange(n_owners)}", cons))
    return subs


def build_store(subs):
    store = SubscriptionStore()
    for sid, owner, cons in subs:
        store.register(Subscription(sid, owner, tuple(Constraint(n, Op(o), v) for n, o, v in cons)))
    return store


def check_cases(n_cases, seed):
    """Return (cases, mismatches) comparing the indexed store with the brute-force oracle."""
    from oracles.matcher import brute_match

    rng = random.Random(seed)
    mismatches = []
    for _ in range(n_cases):
        subs = random_subs(rng)
        header = random_header(rng)
        got = build_store(subs).match(header)
        want = brute_match(header, [(o, c) for _, o, c in subs])
        if got != want:
            mismatches.append((header, subs, got, want))
    return n_cases, mismatches
