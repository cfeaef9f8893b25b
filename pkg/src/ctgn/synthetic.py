"""Seeded synthetic event streams for the acceptance harness.

Two generators:

* ``generate_synthetic`` — duration-sensitive bipartite stream. Each user has
  a latent preferred item cluster; browsing an item of that cluster produces a
  long dwell, anything else a short one. Users keep exploring uniformly but
  also *return* to items their own history marked with long durations. The
  return pattern is what a link predictor can learn, and the durations are
  the only early clue about where a user will return: exploration is uniform,
  so interaction counts and timestamps alone say nothing until returns have
  already accumulated.

* ``generate_contact_stream`` — contact-sequence stream (no durations) with
  heavy repeat structure, mimicking the shape of user/page edit streams, plus
  sparse binary event labels for the node-classification head.
"""

import numpy as np

from .data import EventStore
from .errors import ContractViolation

# dwell-time ranges (seconds): disjoint so that at noise=0 every preferred
# dwell strictly exceeds every non-preferred dwell
PREFERRED_DURATION = (60.0, 100.0)
OTHER_DURATION = (1.0, 21.0)
N_CLUSTERS = 10
RETURN_PROB = 0.5
MEAN_GAP_SECONDS = 10.0


def duration_gap() -> float:
    """Configured mean dwell gap between preferred- and other-cluster events."""
    return (sum(PREFERRED_DURATION) - sum(OTHER_DURATION)) / 2.0


def generate_synthetic(seed: int, n_users: int, n_items: int,
                       n_events: int, noise: float = 0.0) -> EventStore:
    """Duration-sensitive stream; see module docstring for the planted signal."""
    if n_users < 2 or n_items < 2:
        raise ContractViolation("need at least 2 users and 2 items")
    if not (0.0 <= noise <= 1.0):
        raise ContractViolation(f"noise must be in [0,1], got {noise}")
    rng = np.random.default_rng(seed)
    clusters = np.arange(n_items) % min(N_CLUSTERS, n_items)
    user_pref = rng.integers(0, clusters.max() + 1, size=n_users)

    src = rng.integers(0, n_users, size=n_events)
    t = np.cumsum(rng.exponential(MEAN_GAP_SECONDS, size=n_events))
    dst = np.empty(n_events, dtype=np.int64)
    duration = np.empty(n_events, dtype=np.float64)

    long_history = [[] for _ in range(n_users)]
    for i in range(n_events):
        u = src[i]
        hist = long_history[u]
        if hist and rng.random() < RETURN_PROB:
            item = hist[rng.integers(0, len(hist))]
        else:
            item = int(rng.integers(0, n_items))
        preferred = clusters[item] == user_pref[u]
        draw_long = preferred != (rng.random() < noise)
        lo, hi = PREFERRED_DURATION if draw_long else OTHER_DURATION
        duration[i] = rng.uniform(lo, hi)
        if draw_long:
            hist.append(item)
        dst[i] = item
    return EventStore(src, dst + n_users, t, duration,
                      np.zeros((n_events, 0)), has_duration=True,
                      num_nodes=n_users + n_items)


def preferred_mask(store: EventStore, seed: int, n_users: int, n_items: int) -> np.ndarray:
    """True per event iff the destination lies in the source's preferred cluster.

    Recomputes the latent assignment from the seed, for tests that audit the
    planted dwell-time separation.
    """
    rng = np.random.default_rng(seed)
    clusters = np.arange(n_items) % min(N_CLUSTERS, n_items)
    user_pref = rng.integers(0, clusters.max() + 1, size=n_users)
    return clusters[store.dst - n_users] == user_pref[store.src]


def generate_contact_stream(seed: int, n_users: int, n_items: int, n_events: int,
                            repeat_prob: float = 0.9, pref_size: int = 4,
                            feat_dim: int = 4, label_rate: float = 0.3,
                            flagged_frac: float = 0.05) -> EventStore:
    """Repeat-heavy contact-sequence stream (no durations), with event labels."""
    if n_users < 2 or n_items < 2 or pref_size < 1:
        raise ContractViolation("need at least 2 users, 2 items, 1 preferred item")
    rng = np.random.default_rng(seed)
    prefs = np.stack([rng.choice(n_items, size=min(pref_size, n_items), replace=False)
                      for _ in range(n_users)])
    flagged = rng.random(n_users) < flagged_frac

    src = rng.integers(0, n_users, size=n_events)
    t = np.cumsum(rng.exponential(MEAN_GAP_SECONDS, size=n_events))
    use_pref = rng.random(n_events) < repeat_prob
    pref_pick = rng.integers(0, prefs.shape[1], size=n_events)
    uniform_pick = rng.integers(0, n_items, size=n_events)
    dst = np.where(use_pref, prefs[src, pref_pick], uniform_pick)
    label = (flagged[src] & (rng.random(n_events) < label_rate)).astype(np.int64)
    feats = rng.normal(0.0, 1.0, size=(n_events, feat_dim))
    return EventStore(src, dst + n_users, t, np.zeros(n_events), feats, label,
                      has_duration=False, num_nodes=n_users + n_items)
