"""Delimited text formats for datasets, weights, matchings and reports.

Every file opens with a header comment::

    # profrisk-format=1 kind=<kind> config=<hash> dataset=<hash>

followed by a column row. Floats are written with ``repr`` so values survive
a write/read cycle bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    AttributeRecord,
    CouplingGroundTruth,
    Dataset,
    DatasetSplit,
    Gender,
    Match,
    MatchSet,
    Network,
    PairValues,
    SimilarityMatrix,
    UserProfile,
    with_channel_flags,
)
from .errors import FormatError
from .similarity import ChannelStats
from .weights import WeightVector

FORMAT_VERSION = 1
HEADER_PREFIX = "# profrisk-format="

DATASET_FILES = {
    "profiles": "profiles.csv",
    "activity": "activity.csv",
    "edges": "edges.csv",
    "channel": "channels.csv",
    "truth": "truth.csv",
    "split": "split.csv",
    "names": "names.csv",
}

COLUMNS = {
    "profiles": ("network", "user_id", "name", "lat", "lon", "gender"),
    "activity": ("network", "user_id", "timestamp"),
    "edges": ("network", "node_u", "node_v"),
    "channel": ("channel_name", "aux_id", "target_id", "similarity"),
    "truth": ("aux_id", "target_id"),
    "split": ("role", "aux_id", "target_id"),
    "names": ("name", "male_count", "female_count"),
    "weights": ("channel", "weight", "mean", "std"),
    "channel_stats": ("channel", "mean", "count", "hist"),
    "matches": ("aux_id", "target_id", "score"),
    "marginals": ("aux_id", "target_id", "marginal", "similarity"),
    "trace": ("aux_id", "target_id", "iteration_1", "iteration_2", "final"),
    "similarity": ("aux_id", "target_id", "similarity"),
}


# ------------------------------------------------------------------ helpers


def _plain(obj):
    if is_dataclass(obj):
        return _plain(obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj))
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (Network, Gender)):
        return obj.value
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def fmt_float(x: float) -> str:
    return repr(float(x))


def fmt_num(x) -> str:
    """Integral values without a decimal point, everything else as a round-tripping float."""
    if isinstance(x, (int, np.integer)) or float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def parse_num(text: str):
    return int(text) if text.lstrip("-").isdigit() else float(text)


def header_line(kind: str, config: str, dataset: str | None = None, **extra) -> str:
    parts = [f"{HEADER_PREFIX}{FORMAT_VERSION}", f"kind={kind}", f"config={config}", f"dataset={dataset or '-'}"]
    parts += [f"{k}={v}" for k, v in sorted(extra.items())]
    return " ".join(parts)


def parse_header(line: str) -> dict[str, str]:
    if not line.startswith(HEADER_PREFIX):
        raise FormatError(f"missing format header: {line[:60]!r}")
    out = {}
    for tok in line[2:].split():
        k, _, v = tok.partition("=")
        out[k] = v
    if out.get("profrisk-format") != str(FORMAT_VERSION):
        raise FormatError(f"unsupported format version {out.get('profrisk-format')!r}")
    return out


def render_rows(kind: str, rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[kind])
    w.writerows(rows)
    return buf.getvalue()


def write_table(path: Path, kind: str, body: str, config: str, dataset: str | None = None,
                comments: Sequence[str] = (), **extra) -> None:
    lines = [header_line(kind, config, dataset, **extra)] + [f"# {c}" for c in comments]
    Path(path).write_text("\n".join(lines) + "\n" + body, encoding="utf-8")


def read_table(path: Path, kind: str, require_header: bool = True) -> tuple[dict[str, str], list[list[str]], list[str]]:
    """(header fields, data rows, extra comment lines)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header: dict[str, str] = {}
    comments = []
    body_start = 0
    for k, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = k
            break
        if k == 0 and line.startswith(HEADER_PREFIX):
            header = parse_header(line)
        else:
            comments.append(line[1:].strip())
    else:
        body_start = len(lines)
    if require_header and not header:
        raise FormatError(f"{path}: missing format header")
    if header and header.get("kind") != kind:
        raise FormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    rows = list(csv.reader(lines[body_start:]))
    if not rows:
        raise FormatError(f"{path}: missing column row")
    if tuple(rows[0]) != COLUMNS[kind]:
        raise FormatError(f"{path}: expected columns {','.join(COLUMNS[kind])}")
    data = [r for r in rows[1:] if r]
    for r in data:
        if len(r) != len(COLUMNS[kind]) and not (kind == "weights" and r and r[0] == "bias"):
            raise FormatError(f"{path}: malformed row {r!r}")
    return header, data, comments


# ------------------------------------------------------------------ datasets


def _dataset_bodies(ds: Dataset) -> dict[str, str]:
    profiles, activity = [], []
    for net, table in ((Network.AUX, ds.aux), (Network.TARGET, ds.target)):
        for uid in sorted(table):
            r = table[uid].attributes
            lat, lon = ("", "") if r.location is None else (fmt_float(r.location[0]), fmt_float(r.location[1]))
            profiles.append((net.value, uid, r.name or "", lat, lon, r.gender.value))
            for t in r.activity_times or ():
                activity.append((net.value, uid, fmt_num(t)))
    edges = [(net.value, u, v) for net in (Network.AUX, Network.TARGET) for u, v in sorted(ds.edges.get(net, ()))]
    channel = []
    for name in sorted(ds.channels):
        pv = ds.channels[name]
        for k in sorted(range(len(pv)), key=lambda k: (pv.aux_ids[k], pv.target_ids[k])):
            channel.append((name, pv.aux_ids[k], pv.target_ids[k], fmt_float(pv.values[k])))
    truth = sorted(ds.truth.pairs)
    split = []
    if ds.split is not None:
        split += [("train_coupled", a, t) for a, t in ds.split.train_coupled]
        split += [("train_uncoupled", a, t) for a, t in ds.split.train_uncoupled]
        split += [("eval_aux", a, "") for a in ds.split.eval_aux]
        split += [("eval_target", "", t) for t in ds.split.eval_target]
    names = [(n, str(m), str(f)) for n, (m, f) in sorted(ds.name_db.items())]
    return {
        "profiles": render_rows("profiles", profiles),
        "activity": render_rows("activity", activity),
        "edges": render_rows("edges", edges),
        "channel": render_rows("channel", channel),
        "truth": render_rows("truth", truth),
        "split": render_rows("split", split),
        "names": render_rows("names", names),
    }


def _hash_bodies(bodies: Mapping[str, str]) -> str:
    h = hashlib.sha256()
    for kind in DATASET_FILES:
        h.update(kind.encode())
        h.update(b"\0")
        h.update(bodies[kind].encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


def dataset_hash(ds: Dataset) -> str:
    return _hash_bodies(_dataset_bodies(ds))


def write_dataset(ds: Dataset, out_dir: Path, config: str = "-") -> str:
    """Write every dataset file; returns the dataset hash stamped into their headers."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bodies = _dataset_bodies(ds)
    digest = _hash_bodies(bodies)
    for kind, fname in DATASET_FILES.items():
        write_table(out_dir / fname, kind, bodies[kind], config, digest)
    return digest


def _network(text: str) -> Network:
    try:
        return Network(text)
    except ValueError:
        raise FormatError(f"unknown network tag {text!r}") from None


def read_dataset(in_dir: Path) -> Dataset:
    in_dir = Path(in_dir)
    tables = {}
    stamped = set()
    for kind, fname in DATASET_FILES.items():
        path = in_dir / fname
        if not path.exists():
            if kind in ("profiles",):
                raise FormatError(f"{path} not found")
            tables[kind] = []
            continue
        header, rows, _ = read_table(path, kind, require_header=False)
        tables[kind] = rows
        if header:
            stamped.add(header.get("dataset"))

    activity: dict[tuple[str, str], list] = {}
    for net, uid, ts in tables["activity"]:
        activity.setdefault((net, uid), []).append(parse_num(ts))
    aux, target = {}, {}
    for net, uid, name, lat, lon, gender in tables["profiles"]:
        network = _network(net)
        try:
            g = Gender(gender)
        except ValueError:
            raise FormatError(f"unknown gender {gender!r} for {uid}") from None
        times = activity.get((net, uid))
        rec = AttributeRecord(
            name=name or None,
            location=(float(lat), float(lon)) if lat and lon else None,
            gender=g,
            activity_times=tuple(times) if times else None,
            graph_node=uid,
        )
        book = aux if network == Network.AUX else target
        if uid in book:
            raise FormatError(f"duplicate user {uid} in network {net}")
        book[uid] = UserProfile(uid, network, rec)

    edges: dict[Network, list] = {}
    for net, u, v in tables["edges"]:
        edges.setdefault(_network(net), []).append((u, v))
    grouped: dict[str, tuple[list, list, list]] = {}
    for name, a, t, s in tables["channel"]:
        g3 = grouped.setdefault(name, ([], [], []))
        g3[0].append(a)
        g3[1].append(t)
        g3[2].append(float(s))
    channels = {n: PairValues(tuple(a), tuple(t), np.array(v, dtype=float)) for n, (a, t, v) in sorted(grouped.items())}
    truth = CouplingGroundTruth((a, t) for a, t in tables["truth"])
    split = None
    if tables["split"]:
        roles: dict[str, list] = {"train_coupled": [], "train_uncoupled": [], "eval_aux": [], "eval_target": []}
        for role, a, t in tables["split"]:
            if role not in roles:
                raise FormatError(f"unknown split role {role!r}")
            roles[role].append((a, t) if role.startswith("train") else (a or t))
        split = DatasetSplit(tuple(roles["train_coupled"]), tuple(roles["train_uncoupled"]),
                             tuple(roles["eval_aux"]), tuple(roles["eval_target"]))
    name_db = {n.casefold(): (int(m), int(f)) for n, m, f in tables["names"]}
    ds = Dataset(
        aux=with_channel_flags(aux, channels, Network.AUX),
        target=with_channel_flags(target, channels, Network.TARGET),
        edges={k: tuple(v) for k, v in edges.items()},
        channels=channels,
        truth=truth,
        split=split,
        name_db=name_db,
    )
    digest = dataset_hash(ds)
    stamped.discard("-")
    if stamped and stamped != {digest}:
        raise FormatError(f"dataset files in {in_dir} carry hashes {sorted(stamped)} but contents hash to {digest}")
    return Dataset(ds.aux, ds.target, ds.edges, ds.channels, ds.truth, ds.split, ds.name_db, digest)


# ------------------------------------------------------------ model files


def write_weights(w: WeightVector, stats: ChannelStats, out_dir: Path, config: str, dataset: str | None) -> None:
    out_dir = Path(out_dir)
    rows = [(c, fmt_float(w.weights[c]), fmt_float(w.means[c]), fmt_float(w.stds[c])) for c in w.channels]
    body = render_rows("weights", rows) + f"bias,{fmt_float(w.bias)}\n"
    write_table(out_dir / "weights.csv", "weights", body, config, dataset)
    srows = [(c, fmt_float(stats.mean[c]), str(stats.count[c]), ";".join(fmt_float(x) for x in stats.hist[c]))
             for c in sorted(stats.mean)]
    write_table(out_dir / "channel_stats.csv", "channel_stats", render_rows("channel_stats", srows), config, dataset)


def read_weights(in_dir: Path) -> tuple[WeightVector, ChannelStats, dict[str, str]]:
    in_dir = Path(in_dir)
    header, rows, _ = read_table(in_dir / "weights.csv", "weights")
    weights, means, stds = {}, {}, {}
    bias = None
    for r in rows:
        if r[0] == "bias":
            if len(r) != 2:
                raise FormatError("malformed bias row")
            bias = float(r[1])
            continue
        c, wv, mv, sv = r
        weights[c], means[c], stds[c] = float(wv), float(mv), float(sv)
    if bias is None:
        raise FormatError("weights file has no bias row")
    _, srows, _ = read_table(in_dir / "channel_stats.csv", "channel_stats")
    stats = ChannelStats(
        hist={c: tuple(float(x) for x in h.split(";")) for c, _, _, h in srows},
        mean={c: float(m) for c, m, _, _ in srows},
        count={c: int(n) for c, _, n, _ in srows},
    )
    return WeightVector(weights, bias, means, stds), stats, header


# ------------------------------------------------------------ match files


def write_matches(ms: MatchSet, path: Path, config: str, dataset: str | None, total: float | None = None,
                  algo: str | None = None) -> None:
    rows = [(m.aux_id, m.target_id, fmt_float(m.score)) for m in sorted(ms, key=lambda m: (m.aux_id, m.target_id))]
    comments = [f"total={fmt_float(total)}"] if total is not None else []
    extra = {"algo": algo} if algo else {}
    write_table(path, "matches", render_rows("matches", rows), config, dataset, comments, **extra)


def read_matches(path: Path) -> tuple[MatchSet, dict[str, str]]:
    header, rows, _ = read_table(path, "matches")
    return MatchSet(tuple(Match(a, t, float(s)) for a, t, s in rows)), header


def write_similarity(R: SimilarityMatrix, path: Path, config: str, dataset: str | None) -> None:
    ii, jj = np.nonzero(R.mask)
    rows = ((R.aux_ids[i], R.target_ids[j], fmt_float(R.combined[i, j])) for i, j in zip(ii, jj))
    write_table(path, "similarity", render_rows("similarity", rows), config, dataset)


def read_similarity(path: Path) -> tuple[SimilarityMatrix, dict[str, str]]:
    header, rows, _ = read_table(path, "similarity")
    aux = sorted({a for a, _, _ in rows})
    tgt = sorted({t for _, t, _ in rows})
    ai = {a: i for i, a in enumerate(aux)}
    ti = {t: j for j, t in enumerate(tgt)}
    vals = np.zeros((len(aux), len(tgt)))
    mask = np.zeros((len(aux), len(tgt)), dtype=bool)
    for a, t, s in rows:
        vals[ai[a], ti[t]] = float(s)
        mask[ai[a], ti[t]] = True
    return SimilarityMatrix(tuple(aux), tuple(tgt), vals, mask), header


def write_marginals(m, path: Path, config: str, dataset: str | None) -> None:
    g = m.graph
    rows = ((g.aux_ids[i], g.target_ids[j], fmt_float(p), fmt_float(s))
            for i, j, p, s in zip(g.var_aux, g.var_target, m.marginal, g.similarity))
    write_table(path, "marginals", render_rows("marginals", rows), config, dataset)


def read_marginals(path: Path) -> tuple[list[tuple[str, str, float, float]], dict[str, str]]:
    header, rows, _ = read_table(path, "marginals")
    return [(a, t, float(p), float(s)) for a, t, p, s in rows], header


def write_trace(m, path: Path, config: str, dataset: str | None) -> None:
    g = m.graph
    t1, t2, tf = m.trace.get(1), m.trace.get(2, m.trace.get(1)), m.trace["final"]
    rows = ((g.aux_ids[i], g.target_ids[j], fmt_float(a), fmt_float(b), fmt_float(c))
            for i, j, a, b, c in zip(g.var_aux, g.var_target, t1, t2, tf))
    write_table(path, "trace", render_rows("trace", rows), config, dataset, iterations=m.iterations_run)


def read_trace(path: Path) -> tuple[dict[tuple[str, str], tuple[float, float, float]], dict[str, str]]:
    header, rows, _ = read_table(path, "trace")
    return {(a, t): (float(x), float(y), float(z)) for a, t, x, y, z in rows}, header


def write_truth(truth: CouplingGroundTruth, path: Path, config: str, dataset: str | None) -> None:
    write_table(path, "truth", render_rows("truth", sorted(truth.pairs)), config, dataset)


def read_truth(path: Path) -> tuple[CouplingGroundTruth, dict[str, str]]:
    header, rows, _ = read_table(path, "truth", require_header=False)
    return CouplingGroundTruth((a, t) for a, t in rows), header


# ------------------------------------------------------------------ reports


def write_json(obj, path: Path, kind: str, config: str, dataset: str | None) -> None:
    """Key/value tree as indented JSON, preceded by the usual header comment."""
    body = json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(header_line(kind, config, dataset) + "\n" + body, encoding="utf-8")


def read_json(path: Path) -> tuple[object, dict[str, str]]:
    text = Path(path).read_text(encoding="utf-8")
    first, _, rest = text.partition("\n")
    return json.loads(rest), parse_header(first)


def write_csv(path: Path, kind: str, columns: Sequence[str], rows: Iterable[Sequence], config: str,
              dataset: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt_float(x) if isinstance(x, (float, np.floating)) else x for x in r])
    write_table(path, kind, buf.getvalue(), config, dataset)
