"""Independent oracles shared across test modules.

These deliberately re-derive results by the most direct method available
(all-pairs counting, explicit confusion tallies, finite differences) so
the implementations under test are checked against a second route.
"""

import hashlib

import numpy as np

from readmit import neural
from readmit.corpus import Admission, Corpus, Note, Patient


def brute_force_auc(y_true, y_score) -> float:
    """All-pairs AUC: wins count 1, ties 0.5, over every (pos, neg) pair."""
    y_true = np.asarray(y_true)
    y_score = np.asarray(y_score)
    pos = y_score[y_true == 1]
    neg = y_score[y_true == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def confusion_tally(y_true, y_pred):
    tp = fp = fn = tn = 0
    for t, p in zip(y_true, y_pred):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def reference_hash_slot(gram: str, dim: int):
    """Second implementation of the encoder's hashing contract."""
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=9).digest()
    value = 0
    for byte in digest[:8]:
        value = value * 256 + byte
    bucket = value % dim
    sign = 1.0 if digest[8] % 2 == 0 else -1.0
    return bucket, sign


def reference_encode(tokens, dim):
    v = np.zeros(dim)
    grams = list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    for g in grams:
        bucket, sign = reference_hash_slot(g, dim)
        v[bucket] += sign
    n = np.sqrt((v * v).sum())
    return v / n if n > 0 else v


def gradient_check(spec, seed, n_rows=7, step=1e-4, weight_decay=0.0,
                   max_entries=10, kink_margin=5e-3):
    """Worst relative error between analytic and central-difference grads.

    For relu specs, redraws the seed until no pre-activation sits within
    ``kink_margin`` of zero, where finite differences are invalid.
    """
    for attempt in range(50):
        rng = np.random.default_rng(seed + 1000 * attempt)
        model = neural.init_mlp(spec, seed=seed + 1000 * attempt)
        for l in range(len(model.weights)):
            model.weights[l] = rng.normal(0, 0.5, model.weights[l].shape)
            model.biases[l] = rng.normal(0, 0.5, model.biases[l].shape)
        X = rng.normal(0, 1.0, (n_rows, spec.input_dim))
        if spec.output_kind == "softmax":
            Y = np.zeros((n_rows, spec.n_outputs))
            Y[np.arange(n_rows), rng.integers(0, spec.n_outputs, n_rows)] = 1.0
        else:
            Y = (rng.random((n_rows, spec.n_outputs)) < 0.5).astype(float)
        if spec.activation == "relu":
            _, zs, _, _ = neural._forward(model, X)
            if any(np.abs(z).min() < kink_margin for z in zs):
                continue
        break

    loss, gW, gb = neural.loss_and_gradients(model, X, Y, weight_decay=weight_decay)
    worst = 0.0
    param_rng = np.random.default_rng(seed + 7)
    for l in range(len(model.weights)):
        for arr, grad in ((model.weights[l], gW[l]), (model.biases[l], gb[l])):
            flat = arr.reshape(-1)
            gflat = np.asarray(grad).reshape(-1)
            picks = param_rng.permutation(flat.size)[:max_entries]
            for k in picks:
                orig = flat[k]
                flat[k] = orig + step
                lp = neural.loss_and_gradients(model, X, Y, weight_decay=weight_decay)[0]
                flat[k] = orig - step
                lm = neural.loss_and_gradients(model, X, Y, weight_decay=weight_decay)[0]
                flat[k] = orig
                numeric = (lp - lm) / (2 * step)
                rel = abs(numeric - gflat[k]) / max(1e-8, abs(numeric) + abs(gflat[k]))
                worst = max(worst, rel)
    return worst


def tiny_corpus(note_texts=("Sleeping well. Appetite poor.",), label=None,
                n_admissions=1, gap_days=40):
    """A minimal hand-built corpus: one patient, simple notes."""
    from datetime import date, datetime, timedelta

    admissions = []
    admit = date(2019, 1, 1)
    for k in range(n_admissions):
        discharge = admit + timedelta(days=5)
        notes = []
        for i, text in enumerate(note_texts):
            notes.append(Note(
                note_id=f"A{k}-N{i}",
                note_type="DischargeSummary" if i == len(note_texts) - 1 else "Progress",
                timestamp=datetime(admit.year, admit.month, admit.day, 9 + i),
                text=text,
            ))
        admissions.append(Admission(
            admission_id=f"A{k}", patient_id="P0", admit_date=admit,
            discharge_date=discharge, suicide_risk="No", notes=tuple(notes),
            label_readmitted_30d=label,
        ))
        admit = discharge + timedelta(days=gap_days)
    patient = Patient(patient_id="P0", gender="Female", race="White",
                      marital_status="Single", veteran="No",
                      birth_date=date(1985, 6, 15))
    return Corpus(patients=(patient,), admissions=tuple(admissions))
