"""
WER and the biasing-list restricted error rates.

R-WER counts, over the reference tokens that are in the biasing list, the ones that were
substituted or deleted, plus every inserted hypothesis token that is in the list, and
divides by the number of reference tokens in the list. Insertions can push it above 100%;
it is never clamped. R_s-WER and OOV WER are the same computation against the slide
lists and against the words unseen in training.

Among co-optimal alignments the backtrace prefers a match, then a substitution, then a
deletion, then an insertion at every cell.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import DataError
from .utils import atomic_write, read_lines

logger = logging.getLogger(__name__)


class EditOp:
    MATCH = "match"
    SUBSTITUTION = "sub"
    DELETION = "del"
    INSERTION = "ins"


class Metric:
    WER = "wer"
    R_WER = "r-wer"
    RS_WER = "rs-wer"

    ALL = (WER, R_WER, RS_WER)


SPEAKER_TABLE_COLUMNS = ("speaker", "wer", "r_wer", "rs_wer")


@dataclass(frozen=True)
class AlignedPair:
    op: str
    ref: Optional[str]
    hyp: Optional[str]


def _distance_table(ref, hyp):
    table = [[0] * (len(hyp) + 1) for _ in range(len(ref) + 1)]
    for i in range(len(ref) + 1):
        table[i][0] = i
    for j in range(len(hyp) + 1):
        table[0][j] = j
    for i in range(1, len(ref) + 1):
        for j in range(1, len(hyp) + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            table[i][j] = min(table[i - 1][j - 1] + cost, table[i - 1][j] + 1, table[i][j - 1] + 1)
    return table


def edit_distance(ref: Sequence[str], hyp: Sequence[str]) -> int:
    return _distance_table(ref, hyp)[len(ref)][len(hyp)]


def align(ref: Sequence[str], hyp: Sequence[str]) -> List[AlignedPair]:
    """Minimum edit distance alignment with unit costs"""
    table = _distance_table(ref, hyp)
    i, j = len(ref), len(hyp)
    pairs = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and table[i][j] == table[i - 1][j - 1]:
            pairs.append(AlignedPair(EditOp.MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and table[i][j] == table[i - 1][j - 1] + 1:
            pairs.append(AlignedPair(EditOp.SUBSTITUTION, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and table[i][j] == table[i - 1][j] + 1:
            pairs.append(AlignedPair(EditOp.DELETION, ref[i - 1], None))
            i -= 1
        else:
            pairs.append(AlignedPair(EditOp.INSERTION, None, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    return pairs


@dataclass
class ErrorCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    reference_words: int = 0

    @property
    def errors(self):
        return self.substitutions + self.deletions + self.insertions

    @property
    def rate(self) -> Optional[float]:
        return self.errors / self.reference_words if self.reference_words else None

    def __add__(self, other):
        return ErrorCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.reference_words + other.reference_words,
        )


@dataclass
class ListCounts:
    """Errors on biasing-list words and the number of list words in the references"""

    errors: int = 0
    reference_words: int = 0

    @property
    def rate(self) -> Optional[float]:
        return self.errors / self.reference_words if self.reference_words else None

    def __add__(self, other):
        return ListCounts(self.errors + other.errors, self.reference_words + other.reference_words)


def count_errors(alignment: Iterable[AlignedPair]) -> ErrorCounts:
    counts = ErrorCounts()
    for pair in alignment:
        if pair.op == EditOp.SUBSTITUTION:
            counts.substitutions += 1
        elif pair.op == EditOp.DELETION:
            counts.deletions += 1
        elif pair.op == EditOp.INSERTION:
            counts.insertions += 1
        if pair.ref is not None:
            counts.reference_words += 1
    return counts


def count_list_errors(alignment: Iterable[AlignedPair], words) -> ListCounts:
    counts = ListCounts()
    for pair in alignment:
        if pair.ref is not None and pair.ref in words:
            counts.reference_words += 1
            if pair.op in (EditOp.SUBSTITUTION, EditOp.DELETION):
                counts.errors += 1
        elif pair.op == EditOp.INSERTION and pair.hyp in words:
            counts.errors += 1
    return counts


@dataclass
class UtteranceScore:
    utterance_id: str
    speaker: str
    counts: ErrorCounts
    rare: ListCounts
    slides: ListCounts
    oov: ListCounts

    @property
    def wer(self):
        return self.counts.rate


@dataclass
class SpeakerScore:
    wer: Optional[float]
    r_wer: Optional[float]
    rs_wer: Optional[float]

    def metric(self, name):
        return {Metric.WER: self.wer, Metric.R_WER: self.r_wer, Metric.RS_WER: self.rs_wer}[name]


@dataclass
class ScoreReport:
    utterances: List[UtteranceScore] = field(default_factory=list)

    def _total(self, attribute, zero, include_empty=True):
        total = zero
        for utterance in self.utterances:
            if include_empty or utterance.counts.reference_words:
                total = total + getattr(utterance, attribute)
        return total

    @property
    def counts(self) -> ErrorCounts:
        # Utterances with an empty reference have an undefined WER and stay out of the tallies
        return self._total("counts", ErrorCounts(), include_empty=False)

    @property
    def rare(self) -> ListCounts:
        return self._total("rare", ListCounts())

    @property
    def slides(self) -> ListCounts:
        return self._total("slides", ListCounts())

    @property
    def oov(self) -> ListCounts:
        return self._total("oov", ListCounts())

    @property
    def wer(self):
        return self.counts.rate

    @property
    def r_wer(self):
        return self.rare.rate

    @property
    def rs_wer(self):
        return self.slides.rate

    @property
    def oov_wer(self):
        return self.oov.rate

    def speakers(self) -> Dict[str, SpeakerScore]:
        grouped = {}
        for utterance in self.utterances:
            grouped.setdefault(utterance.speaker, ScoreReport()).utterances.append(utterance)
        return {speaker: SpeakerScore(r.wer, r.r_wer, r.rs_wer) for speaker, r in sorted(grouped.items())}


def _words_for(lists, utterance_id):
    """`lists` is either one collection of words shared by every utterance or a per-utterance mapping"""
    if lists is None:
        return frozenset()
    if isinstance(lists, Mapping):
        return frozenset(lists.get(utterance_id, ()))
    return frozenset(lists)


def _lowered(words):
    return frozenset(word.lower() for word in words)


def score_utterance(ref: str, hyp: str, biasing=(), slides=(), oov=(), utterance_id="", speaker="") -> UtteranceScore:
    ref_words, hyp_words = ref.lower().split(), hyp.lower().split()
    alignment = align(ref_words, hyp_words)
    if not ref_words:
        logger.warning(f"Empty reference for utterance '{utterance_id}', its WER is undefined")
    return UtteranceScore(
        utterance_id=utterance_id,
        speaker=speaker,
        counts=count_errors(alignment),
        rare=count_list_errors(alignment, _lowered(biasing)),
        slides=count_list_errors(alignment, _lowered(slides)),
        oov=count_list_errors(alignment, _lowered(oov)),
    )


def score(references, hypotheses, biasing=None, slides=None, oov=None) -> ScoreReport:
    """
    Score hypotheses against references. Both are sequences of objects with `utterance_id`, `speaker` and `text`.
    A missing hypothesis is scored as empty.
    """
    by_id = {hypothesis.utterance_id: hypothesis.text for hypothesis in hypotheses}
    report = ScoreReport()
    for reference in references:
        if reference.utterance_id not in by_id:
            logger.warning(f"No hypothesis for utterance '{reference.utterance_id}', scoring it as empty")
        report.utterances.append(
            score_utterance(
                reference.text,
                by_id.get(reference.utterance_id, ""),
                _words_for(biasing, reference.utterance_id),
                _words_for(slides, reference.utterance_id),
                _words_for(oov, reference.utterance_id),
                utterance_id=reference.utterance_id,
                speaker=reference.speaker,
            )
        )
    return report


def format_rate(rate):
    return "undefined" if rate is None else f"{100.0 * rate:.2f}%"


def format_report(report: ScoreReport, include_slides=False, include_oov=False) -> str:
    counts = report.counts
    lines = [
        f"WER:    {format_rate(report.wer)} "
        f"(S={counts.substitutions} D={counts.deletions} I={counts.insertions} N={counts.reference_words})",
        f"R-WER:  {format_rate(report.r_wer)} ({report.rare.errors}/{report.rare.reference_words})",
    ]
    if include_slides:
        lines.append(f"Rs-WER: {format_rate(report.rs_wer)} ({report.slides.errors}/{report.slides.reference_words})")
    if include_oov:
        lines.append(f"OOV WER: {format_rate(report.oov_wer)} ({report.oov.errors}/{report.oov.reference_words})")
    lines.append("")
    lines.append("\t".join(SPEAKER_TABLE_COLUMNS))
    lines.extend(_speaker_rows(report))
    return "\n".join(lines)


def _cell(value):
    return "-" if value is None else f"{value:.6f}"


def _speaker_rows(report):
    return [
        f"{speaker}\t{_cell(s.wer)}\t{_cell(s.r_wer)}\t{_cell(s.rs_wer)}" for speaker, s in report.speakers().items()
    ]


def write_speaker_table(report: ScoreReport, path):
    with atomic_write(path) as file:
        file.write("\t".join(SPEAKER_TABLE_COLUMNS) + "\n")
        for row in _speaker_rows(report):
            file.write(row + "\n")


def read_speaker_table(path) -> Dict[str, SpeakerScore]:
    table = {}
    for number, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t")
        if fields[0] == SPEAKER_TABLE_COLUMNS[0]:
            continue
        if len(fields) != len(SPEAKER_TABLE_COLUMNS):
            raise DataError(f"{path}:{number}: expected {len(SPEAKER_TABLE_COLUMNS)} tab-separated fields")
        try:
            values = [None if cell == "-" else float(cell) for cell in fields[1:]]
        except ValueError:
            raise DataError(f"{path}:{number}: unparseable rate in '{line}'")
        table[fields[0]] = SpeakerScore(*values)
    return table


def paired_speaker_metric(table_a, table_b, metric=Metric.WER) -> List[Tuple[float, float]]:
    """(A, B) per speaker present in both tables with the metric defined in both"""
    pairs = []
    for speaker in sorted(set(table_a) & set(table_b)):
        a, b = table_a[speaker].metric(metric), table_b[speaker].metric(metric)
        if a is None or b is None:
            logger.info(f"Speaker {speaker}: {metric} undefined, left out of the sign test")
            continue
        pairs.append((a, b))
    return pairs


@dataclass
class SignTestResult:
    p_value: float
    positive: int
    negative: int
    ties: int


def sign_test(pairs: Sequence[Tuple[float, float]]) -> SignTestResult:
    """Two-sided exact binomial sign test on the signs of A - B; ties are dropped"""
    if not pairs:
        raise DataError("the sign test needs at least one speaker pair")
    positive = sum(1 for a, b in pairs if a > b)
    negative = sum(1 for a, b in pairs if a < b)
    ties = len(pairs) - positive - negative
    trials = positive + negative
    if trials == 0:
        logger.warning(f"All {ties} speaker pairs are ties; reporting p = 1")
        return SignTestResult(1.0, 0, 0, ties)
    tail = sum(math.comb(trials, k) for k in range(min(positive, negative) + 1))
    p_value = min(Fraction(1), 2 * Fraction(tail, 2**trials))
    return SignTestResult(float(p_value), positive, negative, ties)


def relative_reduction(baseline, system) -> Optional[float]:
    """(baseline - system) / baseline, undefined for a zero or undefined baseline"""
    if baseline is None or system is None or baseline == 0:
        return None
    return (baseline - system) / baseline
