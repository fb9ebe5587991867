"""Tokenization, sentence segmentation, and structured header extraction.

Clinical notes in this package carry machine-readable header lines in
addition to free text. The header grammar is a fixed contract (one field
per line, keys case-insensitive):

    GAF at admission: <int 1-100>
    GAF at discharge: <int 1-100>
    GAF: <int 1-100>
    Insight: <good|fair|poor>
    Compliance: <yes|partial|none>
    Estimated LOS: <int> days

Users bringing their own notes must emit these surface forms for the
structured fields to be picked up.
"""

import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .errors import FieldRangeError, NoteParseError

_TOKEN_RE = re.compile(r"\w+(?:['\-]\w+)*|[^\w\s]", re.UNICODE)
_BLANK_LINE_RE = re.compile(r"\n[ \t]*\n+")
_PUNCT_RUN_RE = re.compile(r"[.!?]+")
_ABBREV_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z.]*$")


def tokenize(text: str) -> list[str]:
    """Lowercased tokens: whitespace-split with punctuation broken out.

    Punctuation becomes standalone single-character tokens, except hyphens
    and apostrophes inside a word ("self-harm", "don't" stay whole).
    """
    return [m.group(0).lower() for m in _TOKEN_RE.finditer(text)]


def _load_abbreviations() -> frozenset[str]:
    raw = resources.files("readmit.resources").joinpath("abbreviations.txt").read_text("utf-8")
    return frozenset(line.strip() for line in raw.splitlines() if line.strip())


_DEFAULT_ABBREVIATIONS: Optional[frozenset[str]] = None


def default_abbreviations() -> frozenset[str]:
    """Shipped sentence-split guard list (lowercase, trailing dot included)."""
    global _DEFAULT_ABBREVIATIONS
    if _DEFAULT_ABBREVIATIONS is None:
        _DEFAULT_ABBREVIATIONS = _load_abbreviations()
    return _DEFAULT_ABBREVIATIONS


@dataclass(frozen=True)
class TokenizedSentence:
    text: str
    tokens: tuple[str, ...]
    span: tuple[int, int]  # char offsets into the source note text


def _is_guarded_abbreviation(block: str, punct_start: int, abbreviations) -> bool:
    m = _ABBREV_TOKEN_RE.search(block, 0, punct_start)
    if m is None:
        return False
    return (m.group(0) + ".").lower() in abbreviations


def _block_spans(text: str):
    pos = 0
    for m in _BLANK_LINE_RE.finditer(text):
        yield pos, m.start()
        pos = m.end()
    yield pos, len(text)


def split_sentences(text: str, abbreviations=None) -> list[TokenizedSentence]:
    """Segment note text into tokenized sentences.

    Boundaries are '.', '!' or '?' runs followed by whitespace plus an
    uppercase letter (or end of text), and blank lines. A '.' boundary is
    suppressed when the preceding token is on the abbreviation guard list.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    out: list[TokenizedSentence] = []

    def emit(lo: int, hi: int) -> None:
        piece = text[lo:hi]
        stripped = piece.strip()
        if not stripped:
            return
        start = lo + (len(piece) - len(piece.lstrip()))
        end = start + len(stripped)
        out.append(TokenizedSentence(stripped, tuple(tokenize(stripped)), (start, end)))

    for bstart, bend in _block_spans(text):
        block = text[bstart:bend]
        start = 0
        for m in _PUNCT_RUN_RE.finditer(block):
            tail = block[m.end():]
            if tail and not tail[0].isspace():
                continue  # punctuation glued to following text: not a boundary
            nxt = tail.lstrip()
            if nxt and not nxt[0].isupper():
                continue
            if nxt and "." in m.group() and _is_guarded_abbreviation(block, m.start(), abbreviations):
                continue
            emit(bstart + start, bstart + m.end())
            start = m.end()
        emit(bstart + start, bend)
    return out


# Header grammar. One field per line; first match per field wins.
_FIELD_LINE_RES = {
    "gaf_admission": re.compile(r"^[ \t]*gaf[ \t]+at[ \t]+admission[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
    "gaf_discharge": re.compile(r"^[ \t]*gaf[ \t]+at[ \t]+discharge[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
    "gaf": re.compile(r"^[ \t]*gaf[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
    "insight": re.compile(r"^[ \t]*insight[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
    "compliance": re.compile(r"^[ \t]*compliance[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
    "estimated_los": re.compile(r"^[ \t]*estimated[ \t]+los[ \t]*:[ \t]*(?P<v>.*?)[ \t]*\r?$", re.I | re.M),
}

INSIGHT_LEVELS = ("Good", "Fair", "Poor")
COMPLIANCE_LEVELS = ("Yes", "Partial", "None")

_INSIGHT_MAP = {v.lower(): v for v in INSIGHT_LEVELS}
_COMPLIANCE_MAP = {v.lower(): v for v in COMPLIANCE_LEVELS}
_INT_RE = re.compile(r"\d+")
_LOS_VALUE_RE = re.compile(r"(\d+)[ \t]*days", re.I)


@dataclass(frozen=True)
class NoteFields:
    """Structured fields found in a single note."""

    gaf_admission: Optional[int] = None
    gaf_discharge: Optional[int] = None
    gaf: Optional[int] = None
    insight: Optional[str] = None
    compliance: Optional[str] = None
    estimated_los_days: Optional[int] = None


@dataclass(frozen=True)
class StructuredFields:
    """Admission-level resolution of per-note structured fields."""

    gaf_admission: Optional[int] = None
    gaf_discharge: Optional[int] = None
    gaf_per_note: tuple[Optional[int], ...] = ()
    insight: Optional[str] = None
    compliance: Optional[str] = None
    estimated_los_days: Optional[int] = None


def _parse_gaf(raw: str, field: str, note_id) -> int:
    if _INT_RE.fullmatch(raw) is None:
        raise NoteParseError(f"note {note_id}: {field} value {raw!r} is not an integer")
    value = int(raw)
    if not 1 <= value <= 100:
        raise FieldRangeError(f"note {note_id}: {field} value {value} outside [1, 100]")
    return value


def extract_structured(text: str, note_id="<unknown>") -> NoteFields:
    """Extract structured header fields from one note's text.

    Unmatched fields are left as None. A recognized key with an invalid
    value raises; out-of-range GAF raises rather than clamping.
    """
    found = {}
    for field, regex in _FIELD_LINE_RES.items():
        m = regex.search(text)
        if m is None:
            continue
        raw = m.group("v")
        if field in ("gaf_admission", "gaf_discharge", "gaf"):
            found[field] = _parse_gaf(raw, field, note_id)
        elif field == "insight":
            level = _INSIGHT_MAP.get(raw.lower())
            if level is None:
                raise NoteParseError(f"note {note_id}: unrecognized insight value {raw!r}")
            found[field] = level
        elif field == "compliance":
            level = _COMPLIANCE_MAP.get(raw.lower())
            if level is None:
                raise NoteParseError(f"note {note_id}: unrecognized compliance value {raw!r}")
            found[field] = level
        else:
            m2 = _LOS_VALUE_RE.fullmatch(raw)
            if m2 is None:
                raise NoteParseError(f"note {note_id}: estimated LOS value {raw!r} not of the form '<int> days'")
            found["estimated_los_days"] = int(m2.group(1))
    return NoteFields(**found)


def resolve_admission_fields(notes: Sequence) -> StructuredFields:
    """Resolve per-note fields to admission level.

    gaf_admission comes from the earliest note carrying it, gaf_discharge
    from the discharge summary, insight/compliance from the latest note
    stating them (current clinical state), estimated LOS from the earliest
    note stating it. ``notes`` must be timestamp-ordered Note objects.
    """
    per_note = [extract_structured(n.text, n.note_id) for n in notes]

    gaf_admission = next((f.gaf_admission for f in per_note if f.gaf_admission is not None), None)
    estimated_los = next((f.estimated_los_days for f in per_note if f.estimated_los_days is not None), None)
    gaf_discharge = None
    for note, fields in zip(notes, per_note):
        if note.note_type == "DischargeSummary" and fields.gaf_discharge is not None:
            gaf_discharge = fields.gaf_discharge
            break
    insight = None
    compliance = None
    for fields in per_note:
        if fields.insight is not None:
            insight = fields.insight
        if fields.compliance is not None:
            compliance = fields.compliance
    return StructuredFields(
        gaf_admission=gaf_admission,
        gaf_discharge=gaf_discharge,
        gaf_per_note=tuple(f.gaf for f in per_note),
        insight=insight,
        compliance=compliance,
        estimated_los_days=estimated_los,
    )
