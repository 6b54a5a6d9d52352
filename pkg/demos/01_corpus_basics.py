"""
Corpus basics: BIO tags, entity spans, and label granularity
============================================================

Parse a small two-column corpus, pull entity spans out of the tag
sequences, and map fine-grained sub-type labels onto the three coarse
classes used for scoring.
"""

from picoframe import LabelScheme, bio_to_spans, map_fine_to_coarse, parse_conll, spans_to_bio

scheme = LabelScheme.pico()

# Two sentences in the two-column format: token, then O / B-<label> / I-<label>.
# Blank lines separate sentences. The second sentence uses fine-grained labels.
raw = """\
elderly\tB-Participants
patients\tI-Participants
received\tO
budesonide\tB-Interventions

aspirin\tB-Drug
reduced\tO
mortality\tB-Mortality
"""

result = parse_conll(raw, scheme, split="train")
print(f"parsed {len(result)} sentences, {result.repairs} malformed I tags repaired")

for sentence in result:
    print(f"\n{sentence.sentence_id}: {sentence.text}")
    for span in bio_to_spans(sentence):
        print(f"  tokens {span.start}..{span.end}  {span.label:<28} {span.surface!r}")

# Fine labels live under a parent ("Interventions.Drug"), so the duplicated
# sub-type names stay unambiguous. Evaluation happens in coarse space:
fine_sentence = result.sentences[1]
coarse_sentence = map_fine_to_coarse(fine_sentence, scheme)
print("\nfine  :", [t.to_string() for t in fine_sentence.tags])
print("coarse:", [t.to_string() for t in coarse_sentence.tags])

# Span and tag views are interchangeable: the round trip is exact.
spans = bio_to_spans(coarse_sentence)
assert spans_to_bio(spans, len(coarse_sentence)) == coarse_sentence.tags
print("\nspans -> tags -> spans round trip: exact")

# Malformed input does not crash ingestion: stray I tags are promoted to B
# and counted, so the output is always well-formed.
repaired = parse_conll("x\tI-Outcomes\ny\tI-Outcomes\n", scheme)
print(f"stray I at sentence start: repairs={repaired.repairs}, "
      f"tags={[t.to_string() for t in repaired.sentences[0].tags]}")
