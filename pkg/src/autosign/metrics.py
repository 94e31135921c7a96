"""Word error rate with substitution/insertion/deletion attribution."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import UndefinedWERError

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


@dataclass
class EditSummary:
    n_sub: int
    n_ins: int
    n_del: int
    ref_len: int
    alignment: list[tuple[str, str | None, str | None]] = field(default_factory=list)

    @property
    def errors(self) -> int:
        return self.n_sub + self.n_ins + self.n_del

    @property
    def wer(self) -> float:
        return self.errors / self.ref_len


def _tokens(x) -> list[str]:
    return x.split() if isinstance(x, str) else [str(t) for t in x]


def edit_alignment(ref, hyp) -> EditSummary:
    """Unit-cost Levenshtein alignment.

    The distance is unique but the alignment is not; the backtrace prefers
    match, then substitution, then deletion, then insertion.
    """
    r, h = _tokens(ref), _tokens(hyp)
    if not r:
        raise UndefinedWERError("WER is undefined for an empty reference")
    n, m = len(r), len(h)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i
    for j in range(1, m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = D[i - 1][j - 1] + (r[i - 1] != h[j - 1])
            D[i][j] = min(diag, D[i - 1][j] + 1, D[i][j - 1] + 1)

    ops = []
    i, j = n, m
    while i or j:
        if i and j and r[i - 1] == h[j - 1] and D[i][j] == D[i - 1][j - 1]:
            ops.append((MATCH, r[i - 1], h[j - 1]))
            i, j = i - 1, j - 1
        elif i and j and D[i][j] == D[i - 1][j - 1] + 1:
            ops.append((SUB, r[i - 1], h[j - 1]))
            i, j = i - 1, j - 1
        elif i and D[i][j] == D[i - 1][j] + 1:
            ops.append((DEL, r[i - 1], None))
            i -= 1
        else:
            ops.append((INS, None, h[j - 1]))
            j -= 1
    ops.reverse()
    counts = Counter(op for op, _, _ in ops)
    return EditSummary(counts[SUB], counts[INS], counts[DEL], n, ops)


def wer(ref, hyp) -> float:
    return edit_alignment(ref, hyp).wer


def corpus_wer(pairs: Iterable[tuple]) -> float:
    """Pooled WER: total edits over total reference length."""
    errors = total = 0
    n = 0
    for ref, hyp in pairs:
        s = edit_alignment(ref, hyp)
        errors += s.errors
        total += s.ref_len
        n += 1
    if n == 0:
        raise UndefinedWERError("corpus WER needs at least one pair")
    return errors / total


def sentence_mean_wer(pairs: Iterable[tuple]) -> float:
    vals = [wer(r, h) for r, h in pairs]
    if not vals:
        raise UndefinedWERError("sentence-mean WER needs at least one pair")
    return sum(vals) / len(vals)


# ---------------------------------------------------------------------------
# reporting


def _as_words(x, vocab) -> list[str]:
    if vocab is not None and not isinstance(x, str) and all(isinstance(t, int) for t in x):
        return vocab.decode(x)
    return _tokens(x)


def _aligned_lines(summary: EditSummary) -> tuple[str, str, str]:
    tag = {MATCH: "", SUB: "S", DEL: "D", INS: "I"}
    ref_cols, hyp_cols, op_cols = [], [], []
    for op, r, h in summary.alignment:
        r_txt, h_txt = r or "***", h or "***"
        w = max(len(r_txt), len(h_txt))
        ref_cols.append(r_txt.ljust(w))
        hyp_cols.append(h_txt.ljust(w))
        op_cols.append(tag[op].ljust(w))
    return " ".join(ref_cols).rstrip(), " ".join(hyp_cols).rstrip(), " ".join(op_cols).rstrip()


def error_report(pairs: Sequence[tuple], vocab=None, top_k: int = 10) -> str:
    """Plain-text report: aligned REF/HYP per sample with S/I/D tags, corpus
    totals by error type, and the most frequent confusions.

    ``pairs`` holds (sample_id, ref, hyp); tokens may be strings or, when a
    vocabulary is given, ids.
    """
    lines = []
    n_sub = n_ins = n_del = n_ref = 0
    confusions: Counter = Counter()
    deleted: Counter = Counter()
    inserted: Counter = Counter()
    sent_wers = []
    for sample_id, ref, hyp in pairs:
        s = edit_alignment(_as_words(ref, vocab), _as_words(hyp, vocab))
        n_sub, n_ins, n_del, n_ref = n_sub + s.n_sub, n_ins + s.n_ins, n_del + s.n_del, n_ref + s.ref_len
        sent_wers.append(s.wer)
        for op, r, h in s.alignment:
            if op == SUB:
                confusions[(r, h)] += 1
            elif op == DEL:
                deleted[r] += 1
            elif op == INS:
                inserted[h] += 1
        ref_line, hyp_line, op_line = _aligned_lines(s)
        lines.append(f"# {sample_id}\tS={s.n_sub}\tI={s.n_ins}\tD={s.n_del}")
        lines.append(f"REF: {ref_line}")
        lines.append(f"HYP: {hyp_line}")
        if s.errors:
            lines.append(f"     {op_line}")
        lines.append("")

    lines.append("== summary ==")
    lines.append(f"samples\t{len(sent_wers)}")
    lines.append(f"reference_tokens\t{n_ref}")
    lines.append(f"substitutions\t{n_sub}")
    lines.append(f"insertions\t{n_ins}")
    lines.append(f"deletions\t{n_del}")
    if n_ref:
        lines.append(f"wer_pooled\t{(n_sub + n_ins + n_del) / n_ref:.6f}")
        lines.append(f"wer_sentence_mean\t{sum(sent_wers) / len(sent_wers):.6f}")

    def ranked(counter):
        return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]

    lines.append("== top substitutions (ref -> hyp) ==")
    lines.extend(f"{r} -> {h}\t{c}" for (r, h), c in ranked(confusions))
    lines.append("== top deletions ==")
    lines.extend(f"{r}\t{c}" for r, c in ranked(deleted))
    lines.append("== top insertions ==")
    lines.extend(f"{h}\t{c}" for h, c in ranked(inserted))
    return "\n".join(lines) + "\n"


def error_table(pairs: Sequence[tuple], vocab=None) -> str:
    """Machine-readable companion: sample_id, ref, hyp, sub, ins, del."""
    rows = ["sample_id\tref\thyp\tsub\tins\tdel"]
    for sample_id, ref, hyp in pairs:
        r, h = _as_words(ref, vocab), _as_words(hyp, vocab)
        s = edit_alignment(r, h)
        rows.append(f"{sample_id}\t{' '.join(r)}\t{' '.join(h)}\t{s.n_sub}\t{s.n_ins}\t{s.n_del}")
    return "\n".join(rows) + "\n"
