"""Corpus handling for CDR-labeled clinical notes.

Covers ingestion (JSONL/CSV), cleaning (longest-text deduplication and
empty-assessment filtering), one-vs-one subset construction, stratified
train/test splitting, and a synthetic note generator so the pipeline can be
exercised end to end without real patient data.

Record formats
--------------
JSONL: one object per line with keys ``id`` (string), ``s_note`` (string),
``assessment`` (string), ``cdr`` (number in {0.5, 1, 2, 3}).
CSV: header ``id,s_note,assessment,cdr`` with RFC-4180 quoting.

All operations are pure transformations over in-memory lists and are safe to
call concurrently on disjoint data.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import random
from dataclasses import dataclass
from typing import IO, Iterable, Sequence


class CorpusError(Exception):
    """Base class for corpus-level failures."""


class MalformedRow(CorpusError):
    """A row that cannot be turned into a PatientRecord."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyClass(CorpusError):
    """A binary subset is missing one of its two grades entirely."""

    def __init__(self, label: "CdrLabel | None" = None, detail: str = ""):
        msg = detail or (f"no records labeled {label.text}" if label else "a class is empty")
        super().__init__(msg)
        self.label = label


class CdrLabel(enum.Enum):
    """Clinical Dementia Rating grade: the four recognized severity levels.

    Only these four values are constructible; ordering follows numeric order.
    """

    VERY_MILD = 0.5
    MILD = 1.0
    MODERATE = 2.0
    SEVERE = 3.0

    @classmethod
    def parse(cls, value: "float | int | str | CdrLabel") -> "CdrLabel":
        """Parse a numeric value or numeric text into a grade.

        Raises ValueError for anything outside {0.5, 1, 2, 3} (booleans
        included, since they are not clinical grades).
        """
        if isinstance(value, CdrLabel):
            return value
        if isinstance(value, bool):
            raise ValueError(f"not a CDR grade: {value!r}")
        if isinstance(value, str):
            try:
                value = float(value.strip())
            except ValueError:
                raise ValueError(f"not a CDR grade: {value!r}") from None
        if isinstance(value, (int, float)):
            for member in cls:
                if float(value) == member.value:
                    return member
        raise ValueError(f"not a CDR grade: {value!r}")

    @property
    def text(self) -> str:
        """Canonical label text: 0.5 -> "0.5", 1.0 -> "1", 2.0 -> "2", 3.0 -> "3"."""
        return "0.5" if self.value == 0.5 else str(int(self.value))

    @property
    def json_value(self) -> "float | int":
        """Value used on the wire: 0.5 stays a float, whole grades are ints."""
        return 0.5 if self.value == 0.5 else int(self.value)

    def __lt__(self, other: "CdrLabel") -> bool:
        if not isinstance(other, CdrLabel):
            return NotImplemented
        return self.value < other.value

    def __le__(self, other: "CdrLabel") -> bool:
        if not isinstance(other, CdrLabel):
            return NotImplemented
        return self.value <= other.value

    def __gt__(self, other: "CdrLabel") -> bool:
        if not isinstance(other, CdrLabel):
            return NotImplemented
        return self.value > other.value

    def __ge__(self, other: "CdrLabel") -> bool:
        if not isinstance(other, CdrLabel):
            return NotImplemented
        return self.value >= other.value


#: Severity cue tokens planted by the synthetic generator and consumed by the
#: mock backend. Deliberately digit-free so they can never be mistaken for a
#: score by the answer extractor.
SEVERITY_CUES: dict[CdrLabel, str] = {
    CdrLabel.VERY_MILD: "[cue:questionable-decline]",
    CdrLabel.MILD: "[cue:mild-decline]",
    CdrLabel.MODERATE: "[cue:moderate-decline]",
    CdrLabel.SEVERE: "[cue:severe-decline]",
}


@dataclass(frozen=True)
class PatientRecord:
    """One clinical encounter: subjective note (S), assessment note (A), gold grade."""

    patient_id: str
    subjective: str
    assessment: str
    label: CdrLabel

    def __post_init__(self):
        if not self.patient_id:
            raise ValueError("patient_id must be non-empty")
        if not self.subjective.strip():
            raise ValueError("subjective note must be non-empty after trimming")
        if not isinstance(self.label, CdrLabel):
            raise TypeError("label must be a CdrLabel")

    @property
    def text_length(self) -> int:
        """Combined S+A length in Unicode scalar values (dedup tiebreak metric)."""
        return len(self.subjective) + len(self.assessment)


@dataclass(frozen=True)
class TaskPair:
    """A one-vs-one classification task between two grades, low < high."""

    low: CdrLabel
    high: CdrLabel

    def __post_init__(self):
        if not (self.low < self.high):
            raise ValueError(f"pair requires low < high, got {self.low} vs {self.high}")

    @property
    def slug(self) -> str:
        return f"{self.low.text}_vs_{self.high.text}"

    @property
    def display(self) -> str:
        return f"{self.low.text} vs {self.high.text}"

    @classmethod
    def parse(cls, slug: str) -> "TaskPair":
        """Parse a pair slug such as "0.5_vs_1"."""
        parts = slug.strip().split("_vs_")
        if len(parts) != 2:
            raise ValueError(f"bad pair slug {slug!r}; expected e.g. '0.5_vs_1'")
        return cls(CdrLabel.parse(parts[0]), CdrLabel.parse(parts[1]))

    def labels(self) -> tuple[CdrLabel, CdrLabel]:
        return (self.low, self.high)


#: The four pairs used by the experiment protocol.
CANONICAL_PAIRS: tuple[TaskPair, ...] = (
    TaskPair(CdrLabel.VERY_MILD, CdrLabel.MILD),
    TaskPair(CdrLabel.VERY_MILD, CdrLabel.MODERATE),
    TaskPair(CdrLabel.VERY_MILD, CdrLabel.SEVERE),
    TaskPair(CdrLabel.MILD, CdrLabel.SEVERE),
)


@dataclass(frozen=True)
class SubsetSplit:
    """Stratified train/test partition of one binary subset."""

    pair: TaskPair
    train: tuple[PatientRecord, ...]
    test: tuple[PatientRecord, ...]
    split_seed: int


@dataclass(frozen=True)
class ParseResult:
    """Outcome of a corpus parse: records plus (in lenient mode) skipped rows."""

    records: list[PatientRecord]
    skipped: list[MalformedRow]


@dataclass(frozen=True)
class PrepCounts:
    """Bookkeeping from the cleaning passes (raw -> deduped -> complete)."""

    raw: int
    after_dedup: int
    after_filter: int


# ---------------------------------------------------------------------------
# Parsing and serialization
# ---------------------------------------------------------------------------

_FIELDS = ("id", "s_note", "assessment", "cdr")


def _record_from_fields(line: int, rid, s_note, assessment, cdr) -> PatientRecord:
    if not isinstance(rid, str) or not rid:
        raise MalformedRow(line, f"field 'id' must be a non-empty string, got {rid!r}")
    if not isinstance(s_note, str):
        raise MalformedRow(line, "field 's_note' must be a string")
    if not isinstance(assessment, str):
        raise MalformedRow(line, "field 'assessment' must be a string")
    try:
        label = CdrLabel.parse(cdr)
    except ValueError as exc:
        raise MalformedRow(line, str(exc)) from None
    try:
        return PatientRecord(rid, s_note, assessment, label)
    except ValueError as exc:
        raise MalformedRow(line, str(exc)) from None


def _iter_jsonl(data: str) -> Iterable[tuple[int, PatientRecord]]:
    for line_no, line in enumerate(data.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRow(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedRow(line_no, "row is not a JSON object")
        missing = [k for k in _FIELDS if k not in obj]
        if missing:
            raise MalformedRow(line_no, f"missing field(s): {', '.join(missing)}")
        yield line_no, _record_from_fields(
            line_no, obj["id"], obj["s_note"], obj["assessment"], obj["cdr"]
        )


def _iter_csv(data: str) -> Iterable[tuple[int, PatientRecord]]:
    reader = csv.reader(io.StringIO(data))
    try:
        header = next(reader)
    except StopIteration:
        return
    if [h.strip() for h in header] != list(_FIELDS):
        raise MalformedRow(1, f"bad CSV header {header!r}; expected {','.join(_FIELDS)}")
    for row in reader:
        line_no = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise MalformedRow(line_no, f"expected 4 columns, got {len(row)}")
        yield line_no, _record_from_fields(line_no, row[0], row[1], row[2], row[3])


def parse_corpus(
    source: "bytes | IO[bytes]",
    fmt: str = "jsonl",
    *,
    lenient: bool = False,
) -> ParseResult:
    """Parse a UTF-8 byte stream of records in the declared format.

    Strict mode (default) raises MalformedRow on the first bad row. Lenient
    mode collects bad rows into ``skipped`` and keeps going. Row order is
    preserved.
    """
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unknown corpus format {fmt!r}")
    data = source.read() if hasattr(source, "read") else source
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRow(0, f"stream is not UTF-8: {exc}") from None

    rows = _iter_jsonl(text) if fmt == "jsonl" else _iter_csv(text)
    records: list[PatientRecord] = []
    skipped: list[MalformedRow] = []
    while True:
        try:
            _, record = next(rows)
        except StopIteration:
            break
        except MalformedRow as exc:
            if not lenient:
                raise
            skipped.append(exc)
            if exc.line <= 1 and fmt == "csv":
                break  # bad header: nothing else is interpretable
            continue
        records.append(record)
    return ParseResult(records, skipped)


def load_corpus(path, fmt: "str | None" = None, *, lenient: bool = False) -> ParseResult:
    """Read a corpus file, inferring the format from the suffix unless given."""
    from pathlib import Path

    p = Path(path)
    if fmt is None:
        fmt = "csv" if p.suffix.lower() == ".csv" else "jsonl"
    with open(p, "rb") as fh:
        return parse_corpus(fh, fmt, lenient=lenient)


def record_to_obj(record: PatientRecord) -> dict:
    """Wire-format object for one record (documented key order)."""
    return {
        "id": record.patient_id,
        "s_note": record.subjective,
        "assessment": record.assessment,
        "cdr": record.label.json_value,
    }


def serialize_corpus(records: Sequence[PatientRecord]) -> bytes:
    """Canonical JSONL serialization; input for the corpus content digest."""
    if not records:
        return b""
    lines = [
        json.dumps(record_to_obj(r), ensure_ascii=False, separators=(",", ":"))
        for r in records
    ]
    return ("\n".join(lines) + "\n").encode("utf-8")


def write_corpus(records: Sequence[PatientRecord], path, fmt: str = "jsonl") -> None:
    """Write records to disk as JSONL or CSV."""
    if fmt == "jsonl":
        with open(path, "wb") as fh:
            fh.write(serialize_corpus(records))
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(_FIELDS)
            for r in records:
                writer.writerow([r.patient_id, r.subjective, r.assessment, r.label.text])
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")


def corpus_digest(records: Sequence[PatientRecord]) -> str:
    """SHA-256 hex digest of the canonical JSONL serialization."""
    return hashlib.sha256(serialize_corpus(records)).hexdigest()


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------


def dedup_longest(records: Sequence[PatientRecord]) -> list[PatientRecord]:
    """Keep one record per patient_id: the one with the longest combined S+A text.

    Ties keep the earliest occurrence; output is ordered by each id's first
    appearance. Idempotent.
    """
    best: dict[str, tuple[int, int]] = {}  # id -> (text_length, input index)
    order: list[str] = []
    for idx, rec in enumerate(records):
        length = rec.text_length
        if rec.patient_id not in best:
            best[rec.patient_id] = (length, idx)
            order.append(rec.patient_id)
        elif length > best[rec.patient_id][0]:
            best[rec.patient_id] = (length, idx)
    return [records[best[pid][1]] for pid in order]


def drop_empty_assessment(
    records: Sequence[PatientRecord],
) -> tuple[list[PatientRecord], int]:
    """Drop records whose assessment is blank after trimming.

    Returns (kept records in original order, removed count).
    """
    kept = [r for r in records if r.assessment.strip()]
    return kept, len(records) - len(kept)


def clean_corpus(records: Sequence[PatientRecord]) -> tuple[list[PatientRecord], PrepCounts]:
    """Full cleaning pass: dedup first, then drop blank assessments.

    Returns the cleaned records plus the raw/deduped/complete counts.
    """
    deduped = dedup_longest(records)
    complete, _ = drop_empty_assessment(deduped)
    return complete, PrepCounts(len(records), len(deduped), len(complete))


def build_subset(records: Sequence[PatientRecord], pair: TaskPair) -> list[PatientRecord]:
    """Records labeled with either grade of the pair, order preserved.

    Raises EmptyClass if either grade has no records.
    """
    subset = [r for r in records if r.label in (pair.low, pair.high)]
    for label in pair.labels():
        if not any(r.label is label for r in subset):
            raise EmptyClass(label)
    return subset


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------


def _class_seed(seed: int, label: CdrLabel) -> int:
    """Derived per-class seed: first 8 bytes of SHA-256 over "<seed>|<label>"."""
    digest = hashlib.sha256(f"{seed}|{label.text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def split_stratified(
    subset: Sequence[PatientRecord],
    ratio: float = 0.8,
    seed: int = 0,
    *,
    pair: "TaskPair | None" = None,
) -> SubsetSplit:
    """Stratified train/test split of a binary subset.

    Each class is shuffled independently with Python's Mersenne Twister
    (`random.Random`) seeded by SHA-256 over "<seed>|<label>", guaranteeing
    byte-identical splits for identical inputs. Per class, the test set takes
    the first round((1 - ratio) * class_count) shuffled records.
    """
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    present = sorted({r.label for r in subset}, key=lambda l: l.value)
    if pair is None:
        if len(present) != 2:
            raise EmptyClass(detail=f"need exactly two classes to split, found {len(present)}")
        pair = TaskPair(present[0], present[1])

    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in pair.labels():
        idxs = [i for i, r in enumerate(subset) if r.label is label]
        if not idxs:
            raise EmptyClass(label)
        rng = random.Random(_class_seed(seed, label))
        rng.shuffle(idxs)
        n_test = min(len(idxs), max(0, round((1.0 - ratio) * len(idxs))))
        test_idx.extend(idxs[:n_test])
        train_idx.extend(idxs[n_test:])

    return SubsetSplit(
        pair=pair,
        train=tuple(subset[i] for i in train_idx),
        test=tuple(subset[i] for i in test_idx),
        split_seed=seed,
    )


def split_manifest(split: SubsetSplit, digest: str) -> dict:
    """JSON-ready manifest identifying one split for replay."""
    return {
        "pair": split.pair.slug,
        "split_seed": split.split_seed,
        "train_ids": [r.patient_id for r in split.train],
        "test_ids": [r.patient_id for r in split.test],
        "corpus_digest": digest,
    }


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_S_PHRASES: dict[CdrLabel, list[str]] = {
    CdrLabel.VERY_MILD: [
        "reports misplacing keys and repeating questions over recent months",
        "occasional word-finding pauses noticed by spouse",
        "forgets conversation details yet still manages bills and appointments",
        "subtle memory lapses at work, otherwise fully independent",
        "slower to recall recent events but oriented at home",
    ],
    CdrLabel.MILD: [
        "family describes growing forgetfulness and missed appointments",
        "needs reminders for medications and routine errands",
        "got lost driving a familiar route last month",
        "difficulty following longer conversations and television plots",
        "stopped managing the household budget this year",
    ],
    CdrLabel.MODERATE: [
        "requires prompting for dressing and basic hygiene",
        "frequently disoriented to day and place while at home",
        "left the stove on twice this month per daughter",
        "no longer shops or handles money without supervision",
        "wanders at night and misidentifies the front door",
    ],
    CdrLabel.SEVERE: [
        "unable to recognize close relatives on most days",
        "speaks only a few words and is largely bed bound",
        "requires full assistance for feeding and toileting",
        "incontinent and dependent for all self-care",
        "no purposeful activity; continuous supervision required",
    ],
}

_A_PHRASES: dict[CdrLabel, list[str]] = {
    CdrLabel.VERY_MILD: [
        "very mild amnestic presentation; instrumental function preserved",
        "borderline deficits limited to the memory domain; independence maintained",
        "questionable early decline, follow at next visit",
    ],
    CdrLabel.MILD: [
        "mild dementia picture with impaired recent recall",
        "moderate attention lapses; partial insight retained",
        "functional decline in community affairs consistent with the mild stage",
    ],
    CdrLabel.MODERATE: [
        "moderate dementia; temporal disorientation and impaired judgment",
        "needs hands-on assistance with activities of daily living",
        "clear multidomain decline evident on interview",
    ],
    CdrLabel.SEVERE: [
        "severe dementia; nonverbal with total care dependence",
        "profound disorientation; no independent function remains",
        "end-stage cognitive decline requiring full-time care",
    ],
}

_FILLERS = [
    "vitals stable",
    "no acute distress today",
    "sleep pattern variable",
    "appetite fair per caregiver",
    "ambulates with assistance as needed",
    "no new focal deficits",
    "medication list reviewed",
]


def generate_synthetic(
    n_per_label: int,
    seed: int,
    *,
    noise_level: float = 0.3,
) -> list[PatientRecord]:
    """Generate n_per_label records per grade from grade-specific phrase banks.

    Each note embeds the grade's severity cue token (see SEVERITY_CUES) so the
    mock backend can be made arbitrarily accurate. ``noise_level`` is the
    probability of appending an uninformative filler clause to each field.
    Deterministic for a fixed (n_per_label, seed, noise_level).
    """
    if n_per_label < 1:
        raise ValueError("n_per_label must be >= 1")
    rng = random.Random(seed)
    records: list[PatientRecord] = []
    for label in CdrLabel:
        cue = SEVERITY_CUES[label]
        for i in range(n_per_label):
            s_parts = rng.sample(_S_PHRASES[label], k=2)
            if rng.random() < noise_level:
                s_parts.append(rng.choice(_FILLERS))
            a_parts = rng.sample(_A_PHRASES[label], k=2)
            if rng.random() < noise_level:
                a_parts.append(rng.choice(_FILLERS))
            records.append(
                PatientRecord(
                    patient_id=f"syn-{label.text.replace('.', '')}-{i:04d}",
                    subjective=f"{'; '.join(s_parts)}. {cue}",
                    assessment=f"{'; '.join(a_parts)}. {cue}",
                    label=label,
                )
            )
    return records
