"""
Scoring identities: precision, recall, F, and Jaccard accuracy
==============================================================

All four reported metrics derive from the same per-class token counts, so
they are bound by identities: F is the harmonic mean of P and R, and the
"accuracy" column is the Jaccard index tp / (tp + fp + fn), which equals
F / (2 - F) exactly. Aggregate rows are unweighted means over the three
classes (macro), not pooled counts (micro) - the two disagree whenever the
classes are imbalanced.
"""

from picoframe.evalkit import (
    ClassCounts,
    accuracy_from_f1,
    class_metrics,
    f1_from_precision_recall,
    macro_metrics,
)

counts = ClassCounts("Outcomes", tp=5, fp=3, fn=5)
m = class_metrics(counts)
print(f"counts tp=5 fp=3 fn=5 -> P={m['precision']:.4f} R={m['recall']:.4f} "
      f"F={m['f1']:.4f} Acc={m['accuracy']:.4f}")

# identity 1: F follows from P and R
assert m["f1"] == f1_from_precision_recall(m["precision"], m["recall"])
# identity 2: the Jaccard accuracy follows from F alone
assert abs(m["accuracy"] - accuracy_from_f1(m["f1"])) < 1e-12
print("identities hold: F = 2PR/(P+R), Acc = F/(2-F)")

# The identities let published-style score rows be cross-checked without any
# model runs: given a row's P and R, its F and Acc are forced.
for p, r in [(85.88, 49.03), (82.38, 70.28), (45.06, 36.93)]:
    f = 100 * f1_from_precision_recall(p / 100, r / 100)
    acc = 100 * accuracy_from_f1(f / 100)
    print(f"P={p:6.2f} R={r:6.2f} -> F={f:6.2f} Acc={acc:6.2f}")

# Macro vs micro: the aggregate F is the mean of per-class Fs, which is NOT
# the harmonic mean of the aggregate P and R.
per_class = {
    "Participants": ClassCounts("Participants", tp=90, fp=10, fn=5),
    "Interventions": ClassCounts("Interventions", tp=10, fp=40, fn=30),
    "Outcomes": ClassCounts("Outcomes", tp=50, fp=20, fn=20),
}
report = macro_metrics(per_class)
harmonic = f1_from_precision_recall(report.macro["precision"], report.macro["recall"])
print(f"\nmacro F = {100 * report.macro['f1']:.2f}  "
      f"vs harmonic(macro P, macro R) = {100 * harmonic:.2f}")
print("aggregate rows below the harmonic mean of their own P and R are the "
      "signature of macro averaging")
