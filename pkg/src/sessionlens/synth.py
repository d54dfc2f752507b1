"""Deterministic synthetic search sessions, knowledge records and planted signals.

Session shape is drawn from moment-matched distributions (query count,
page count, query length and session duration); event times inside a session
come from a Dirichlet split of its duration. Knowledge scores are produced
after feature extraction so that gains (or post-test states) are linear in
the standardized values of the planted features plus unit Gaussian noise.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from urllib.parse import quote_plus

import numpy as np

from ._rng import mix64
from .features import FEATURE_NAMES, AoALexicon, extract
from .knowledge import CLASSES, KnowledgeRecord, bin_class, records_to_document, standardize
from .session_log import DEFAULT_SERP_PREFIX, Event, assemble_sessions, serialize_events

# weights on the standardized feature, in units of the latent noise SD
EFFECT_SIZES = {"none": 0.0, "small": 1.0, "medium": 3.0, "large": 10.0}

# items per knowledge test, cycled over topics
ITEM_COUNTS = (20, 10, 10, 12, 20, 20, 10, 15, 20, 10, 45)

TOPICS = {
    "glaciers": ("glacier", "ice", "melting", "moraine", "crevasse", "climate", "retreat", "alpine"),
    "volcanoes": ("volcano", "lava", "magma", "eruption", "ash", "crater", "tectonic", "plume"),
    "honeybees": ("bee", "hive", "honey", "pollen", "queen", "colony", "nectar", "swarm"),
    "tides": ("tide", "moon", "ocean", "gravity", "coast", "spring", "neap", "current"),
    "comets": ("comet", "tail", "orbit", "nucleus", "dust", "coma", "halley", "perihelion"),
    "coral_reefs": ("coral", "reef", "bleaching", "polyp", "algae", "tropical", "marine", "barrier"),
    "bridges": ("bridge", "suspension", "arch", "cable", "span", "steel", "truss", "load"),
    "vaccines": ("vaccine", "immune", "antibody", "dose", "virus", "booster", "trial", "immunity"),
    "deserts": ("desert", "dune", "sand", "arid", "cactus", "oasis", "drought", "sahara"),
    "lighthouses": ("lighthouse", "beacon", "lens", "keeper", "coast", "lamp", "signal", "tower"),
    "tornadoes": ("tornado", "funnel", "storm", "wind", "supercell", "warning", "damage", "scale"),
}
GENERAL_WORDS = (
    "what", "how", "why", "is", "the", "of", "causes", "effects", "history", "facts",
    "types", "definition", "examples", "best", "guide", "symptoms", "prevention", "famous",
)
TITLE_WORDS = ("overview", "guide", "facts", "introduction", "explained", "basics", "research", "news")
HOSTS = (
    "www.encyclo.example", "learnhub.example", "www.sciencedaily.example", "wiki.example",
    "www.govinfo.example", "edu.example", "news.example", "www.healthline.example",
    "blog.example", "museum.example", "www.kids.example", "archive.example",
)
RESULTS_PER_PAGE = 10


class SynthError(ValueError):
    pass


def _nb_params(mean: float, sd: float) -> tuple[float, float]:
    """(r, p) of a negative binomial with the given mean and SD (requires sd² > mean)."""
    var = sd * sd
    if not var > mean > 0:
        raise SynthError(f"negative binomial needs variance > mean > 0 (mean={mean}, sd={sd})")
    p = mean / var
    return mean * p / (1.0 - p), p


@dataclass(frozen=True)
class Distributions:
    """Moments used to draw session shapes and knowledge scores."""

    duration_min_mean: float = 4.82
    duration_min_sd: float = 5.20
    pages_mean: float = 5.46
    pages_sd: float = 3.41
    queries_mean: float = 2.20
    queries_sd: float = 2.18
    query_len_mean: float = 4.56
    query_len_sd: float = 2.63
    pre_mean: float = 0.4076
    pre_sd: float = 0.2223
    gain_mean: float = 0.193
    gain_sd: float = 0.231
    state_mean: float = 0.618
    state_sd: float = 0.191
    serp_mouseover_rate: float = 1.5
    scroll_rate_per_min: float = 3.0
    keypress_rate: float = 0.3
    chained_page_prob: float = 0.2
    revisit_prob: float = 0.1


def _effect_value(v) -> float:
    if isinstance(v, str):
        try:
            return EFFECT_SIZES[v]
        except KeyError:
            raise SynthError(f"unknown effect size {v!r}; use a number or one of {sorted(EFFECT_SIZES)}") from None
    return float(v)


@dataclass(frozen=True)
class GeneratorSpec:
    """What to generate.

    ``effects`` maps a canonical feature name either to a size (number or
    ``"small"``/``"medium"``/``"large"``) applied to the gain, or to a mapping
    ``{"gain": size, "state": size}``.
    """

    n_sessions: int = 100
    n_topics: int = len(TOPICS)
    seed: int = 0
    effects: dict = field(default_factory=dict)
    n_items: int | None = None
    serp_prefix: str = DEFAULT_SERP_PREFIX
    distributions: Distributions = field(default_factory=Distributions)

    def __post_init__(self):
        if self.n_sessions < 1:
            raise SynthError("n_sessions must be >= 1")
        if not 1 <= self.n_topics <= len(TOPICS):
            raise SynthError(f"n_topics must lie in [1, {len(TOPICS)}]")
        if self.n_items is not None and self.n_items < 2:
            raise SynthError("n_items must be >= 2")
        unknown = sorted(set(self.effects) - set(FEATURE_NAMES))
        if unknown:
            raise SynthError(f"effects on unknown features: {unknown}")
        self.effect_weights()  # validates sizes

    def effect_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature weights on the gain and on the state latent."""
        gain = np.zeros(len(FEATURE_NAMES))
        state = np.zeros(len(FEATURE_NAMES))
        for name, v in self.effects.items():
            j = FEATURE_NAMES.index(name)
            if isinstance(v, dict):
                extra = set(v) - {"gain", "state"}
                if extra:
                    raise SynthError(f"effect targets must be 'gain' or 'state', got {sorted(extra)}")
                gain[j] = _effect_value(v.get("gain", 0.0))
                state[j] = _effect_value(v.get("state", 0.0))
            else:
                gain[j] = _effect_value(v)
        return gain, state

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        dist = d.pop("distributions", None) or {}
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise SynthError(f"unknown generator fields {sorted(unknown)}")
        try:
            return cls(**d, distributions=Distributions(**dist))
        except TypeError as exc:
            raise SynthError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthResult:
    spec: GeneratorSpec
    events: list[Event]
    records: list[KnowledgeRecord]
    lexicon: AoALexicon
    latent_gain: np.ndarray = field(repr=False)
    latent_state: np.ndarray = field(repr=False)

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"events": out / "events.jsonl", "records": out / "records.json", "lexicon": out / "lexicon.csv"}
        paths["events"].write_text(serialize_events(self.events), encoding="utf-8")
        paths["records"].write_text(json.dumps(records_to_document(self.records), indent=1, sort_keys=True),
                                    encoding="utf-8")
        lines = ["word,aoa"] + [f"{w},{self.lexicon[w]!r}" for w in sorted(self.lexicon)]
        paths["lexicon"].write_text("\n".join(lines) + "\n", encoding="utf-8")
        return paths


def build_lexicon(seed: int) -> AoALexicon:
    """Synthetic ages of acquisition for every word the generator can emit."""
    words = sorted({w for ws in TOPICS.values() for w in ws} | set(GENERAL_WORDS) | set(TITLE_WORDS))
    rng = np.random.default_rng(mix64(seed, 1 << 32))
    return AoALexicon({w: round(float(rng.uniform(3.0, 14.0)), 2) for w in words})


class _SessionWriter:
    """Builds one session's events in timestamp order."""

    def __init__(self, sid, user, topic, prefix):
        self.sid, self.user, self.topic, self.prefix = sid, user, topic, prefix
        self.events: list[Event] = []

    def emit(self, t, kind, **payload):
        self.events.append(Event(self.sid, int(t), kind, payload, self.user, self.topic))


def _sorted_times(rng, lo, hi, n):
    if n <= 0 or hi <= lo:
        return []
    return sorted(int(v) for v in rng.integers(lo + 1, hi, size=n, endpoint=False)) if hi - lo > 1 else []


def _session_events(spec: GeneratorSpec, i: int) -> list[Event]:
    dist = spec.distributions
    rng = np.random.default_rng(mix64(spec.seed, i))
    topic = list(TOPICS)[i % spec.n_topics]
    vocab = TOPICS[topic]
    w = _SessionWriter(f"S{i:05d}", f"U{i:05d}", topic, spec.serp_prefix)

    rq, pq = _nb_params(dist.queries_mean - 1.0, dist.queries_sd)
    rp, pp = _nb_params(dist.pages_mean, dist.pages_sd)
    rl, pl = _nb_params(dist.query_len_mean - 1.0, dist.query_len_sd)
    n_q = 1 + int(rng.negative_binomial(rq, pq))
    n_pages = int(rng.negative_binomial(rp, pp))
    shape = (dist.duration_min_mean / dist.duration_min_sd) ** 2
    scale = dist.duration_min_sd ** 2 / dist.duration_min_mean * 60.0
    duration_ms = max(1000, int(round(rng.gamma(shape, scale) * 1000.0)))
    pages_per_q = rng.multinomial(n_pages, [1.0 / n_q] * n_q)

    # blocks: ("serp", q) | ("page", q, chained) | ("gap", q)
    blocks = []
    for q in range(n_q):
        blocks.append(("serp", q, False))
        for k in range(pages_per_q[q]):
            chained = k > 0 and rng.random() < dist.chained_page_prob
            if not chained and k > 0:
                blocks.append(("gap", q, False))
            blocks.append(("page", q, chained))
    alpha = np.array([{"serp": 1.0, "page": 2.0, "gap": 0.5}[b[0]] for b in blocks])
    cuts = np.concatenate([[0.0], np.cumsum(rng.dirichlet(alpha))])
    bounds = np.round(cuts * duration_ms).astype(np.int64)
    bounds[-1] = duration_ms

    visited: list[tuple[str, str, int]] = []
    open_url = None
    serp_ref = ""
    for b, (kind, q, chained) in enumerate(blocks):
        t0, t1 = int(bounds[b]), int(bounds[b + 1])
        if kind == "serp":
            n_terms = 1 + int(rng.negative_binomial(rl, pl))
            words = [vocab[int(rng.integers(len(vocab)))] if rng.random() < 0.6
                     else GENERAL_WORDS[int(rng.integers(len(GENERAL_WORDS)))] for _ in range(n_terms)]
            text = " ".join(words)
            serp_ref = f"{w.prefix}?q={quote_plus(text)}"
            w.emit(t0, "query", text=text)
            w.emit(t0, "serp_render", query_index=q, result_count=RESULTS_PER_PAGE, results=[])
            for t in _sorted_times(rng, t0, t1, rng.poisson(dist.serp_mouseover_rate)):
                w.emit(t, "mouseover", rank=int(rng.integers(1, RESULTS_PER_PAGE + 1)))
            continue
        if kind == "gap":
            for t in _sorted_times(rng, t0, t1, rng.poisson(0.5 * dist.serp_mouseover_rate)):
                w.emit(t, "mouseover", rank=int(rng.integers(1, RESULTS_PER_PAGE + 1)))
            continue

        if not chained and visited and rng.random() < dist.revisit_prob:
            url, title, size = visited[int(rng.integers(len(visited)))]
        else:
            host = HOSTS[int(rng.integers(len(HOSTS)))]
            words = [vocab[int(rng.integers(len(vocab)))] for _ in range(1 + int(rng.integers(3)))]
            url = f"https://{host}/{topic}/{'-'.join(words)}-{len(visited)}"
            title_words = words + [TITLE_WORDS[int(rng.integers(len(TITLE_WORDS)))]]
            title = " ".join(x.capitalize() for x in title_words)
            size = int(rng.lognormal(math.log(40000), 0.6))
            visited.append((url, title, size))
        if chained:
            w.emit(t0, "page_load", url=url, title=title, size_bytes=size, referrer_url=open_url)
            w.emit(t0, "page_leave", url=open_url)
        else:
            w.emit(t0, "serp_click", rank=int(rng.integers(1, RESULTS_PER_PAGE + 1)), url=url)
            w.emit(t0, "page_load", url=url, title=title, size_bytes=size, referrer_url=serp_ref)
        open_url = url
        dwell_min = (t1 - t0) / 60000.0
        scroll_times = _sorted_times(rng, t0, t1, rng.poisson(dist.scroll_rate_per_min * dwell_min))
        key_times = _sorted_times(rng, t0, t1, rng.poisson(dist.keypress_rate))
        pos = 0
        for t, is_key in sorted([(t, False) for t in scroll_times] + [(t, True) for t in key_times]):
            if is_key:
                w.emit(t, "keypress")
                continue
            delta = int(rng.integers(-400, 801))
            delta = max(delta, -pos)
            pos += delta
            w.emit(t, "scroll", delta_px=delta, position_px=pos)
        next_chained = b + 1 < len(blocks) and blocks[b + 1][0] == "page" and blocks[b + 1][2]
        if not next_chained:
            w.emit(t1, "page_leave", url=url)
            open_url = None

    if w.events[-1].timestamp != duration_ms:
        w.emit(duration_ms, "keypress")
    return w.events


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _answers(rng, k: int, key: dict) -> dict:
    """Mark ``k`` randomly chosen items correct and the rest IDK."""
    items = list(key)
    correct = set(rng.choice(len(items), size=k, replace=False).tolist()) if k else set()
    return {item: (key[item] if j in correct else "IDK") for j, item in enumerate(items)}


def _answer_key(m: int) -> dict:
    return {f"i{j + 1:02d}": ("TRUE" if j % 2 == 0 else "FALSE") for j in range(m)}


def _standardized_columns(F: np.ndarray) -> np.ndarray:
    if F.shape[0] < 2:
        return np.zeros_like(F)
    mu = F.mean(axis=0)
    sd = F.std(axis=0, ddof=1)
    return np.where(sd > 0, (F - mu) / np.where(sd > 0, sd, 1.0), 0.0)


def _latent(Z, weights, noise):
    return (Z @ weights + noise) / math.sqrt(float(weights @ weights) + 1.0)


def generate(spec: GeneratorSpec) -> SynthResult:
    """Event log, knowledge records and lexicon for ``spec``; pure in the seed.

    Gains are clipped to [-1, 1] and scores to [0, 1] before answers are
    synthesized. The planted quantity (gain, or post-test score when a state
    effect is present) is rounded to whole items once, so it lands within
    half an item of its target; the companion score is derived from it.
    """
    dist = spec.distributions
    lexicon = build_lexicon(spec.seed)
    per_session = [_session_events(spec, i) for i in range(spec.n_sessions)]
    events = [e for evs in per_session for e in evs]

    sessions = {s.session_id: s for s in assemble_sessions(events, spec.serp_prefix)}
    F = np.vstack([extract(sessions[evs[0].session_id], lexicon).values for evs in per_session])
    Z = _standardized_columns(F)
    w_gain, w_state = spec.effect_weights()

    n = spec.n_sessions
    label_rngs = [np.random.default_rng(mix64(mix64(spec.seed, i), 1)) for i in range(n)]
    eps = np.array([[r.standard_normal() for _ in range(2)] for r in label_rngs])
    lat_gain = _latent(Z, w_gain, eps[:, 0])
    lat_state = _latent(Z, w_state, eps[:, 1])
    plant_state = bool(np.any(w_state))

    records = []
    for i, evs in enumerate(per_session):
        rng = label_rngs[i]
        topic = evs[0].topic_id
        m = spec.n_items or ITEM_COUNTS[list(TOPICS).index(topic) % len(ITEM_COUNTS)]
        key = _answer_key(m)
        gain = float(np.clip(dist.gain_mean + dist.gain_sd * lat_gain[i], -1.0, 1.0))
        if plant_state:
            post = float(np.clip(dist.state_mean + dist.state_sd * lat_state[i], 0.0, 1.0))
            k_post = _round_half_up(post * m)
            k_pre = min(max(_round_half_up(k_post - gain * m), 0), m)
        else:
            lo, hi = max(0.0, -gain), min(1.0, 1.0 - gain)
            pre = float(np.clip(dist.pre_mean + dist.pre_sd * rng.standard_normal(), lo, hi))
            # round the planted quantity once so the other score inherits no extra error
            k_pre = _round_half_up(pre * m)
            k_post = min(max(_round_half_up(k_pre + gain * m), 0), m)
        records.append(KnowledgeRecord(
            user_id=evs[0].user_id, topic_id=topic,
            pre_answers=_answers(rng, k_pre, key), post_answers=_answers(rng, k_post, key), answer_key=key,
        ))
    return SynthResult(spec, events, records, lexicon, lat_gain, lat_state)


def load_spec(path, seed: int | None = None) -> GeneratorSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SynthError(f"{path}: malformed generator spec ({exc.msg})") from None
    spec = GeneratorSpec.from_dict(doc)
    return spec if seed is None else replace(spec, seed=seed)


def planted_dataset(n: int, effects: dict, seed: int = 0, noise_sd: float = 1.0,
                    columns=FEATURE_NAMES, target: str = "gain"):
    """Gaussian feature matrix whose target is linear in the ``effects`` columns.

    Columns are iid standard normal; ``target = Σ effect·x + noise_sd·ε``.
    Classes come from z-binning the target, so ``noise_sd=0`` gives a
    threshold-separable problem.
    """
    from .evaluation import Dataset

    columns = tuple(columns)
    unknown = set(effects) - set(columns)
    if unknown:
        raise SynthError(f"effects on unknown columns {sorted(unknown)}")
    rng = np.random.default_rng(mix64(seed, 0))
    X = rng.standard_normal((n, len(columns)))
    w = np.zeros(len(columns))
    for name, v in effects.items():
        w[columns.index(name)] = _effect_value(v)
    y_cont = X @ w + noise_sd * rng.standard_normal(n)
    classes = [CLASSES.index(bin_class(z)) for z in standardize(y_cont)]
    return Dataset(X, classes, columns, y_cont, None, target)


def pipeline_dataset(result: SynthResult, target: str = "gain", grouping: str = "global"):
    """Run a generated corpus through parse, assembly, filtering, extraction and labelling."""
    from .evaluation import build_dataset
    from .features import extract_matrix
    from .knowledge import label_dataset
    from .session_log import filter_sessions, parse_event_stream

    events = parse_event_stream(serialize_events(result.events))
    sessions = assemble_sessions(events, result.spec.serp_prefix)
    kept, _ = filter_sessions(sessions, result.records)
    matrix = extract_matrix(kept, result.lexicon)
    labels = [{"user_id": r.user_id, "topic_id": r.topic_id, "gain": r.gain, "post": r.post_score,
               "gain_class": r.gain_class, "state_class": r.state_class}
              for r in label_dataset(result.records, grouping)]
    return build_dataset(matrix, labels, target)


def benchmark_dataset(n_sessions: int = 300, feature: str = "b_time_max_per_page", effect="large",
                      seed: int = 0, target: str = "gain", grouping: str = "global"):
    """Synthetic corpus with one planted feature, as a labelled :class:`Dataset`."""
    spec = GeneratorSpec(n_sessions=n_sessions, seed=seed, effects={feature: {target: effect}})
    return pipeline_dataset(generate(spec), target, grouping)
