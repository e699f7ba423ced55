"""Smoke test for the corpusbias extension module.

Build and install first:  pip install --no-build-isolation -e crates/py
"""

import random

import corpusbias as cb


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL {what}")
    print(f"ok   {what}")


def main():
    check(f"{cb.fkgl(19.84, 1.38):.2f}" == "8.43", "fkgl")

    corpus = cb.Corpus(["He fixed his bike. The cat slept.", "She is an idiot. It rained."], name="smoke")
    check(len(corpus) == 4, "segmentation")
    check(corpus.tokens()[0] == ["He", "fixed", "his", "bike", "."], "tokenization")
    check(cb.structural_stats(corpus)["avg_sentence_length"] > 0, "structural stats")

    freq = cb.keyword_frequency(corpus, {"gender": {"male": ["he", "his"], "female": ["she", "her"]}})
    check(freq["gender"]["male"] > freq["gender"]["female"], "keyword frequency")

    cda = cb.cda_augment(corpus)
    check(len(cda) == 6, "cda appends swapped copies")
    check("She fixed her bike." in cda.sentences(), "cda swap")
    check(cda.provenance()[-1]["operation"] == "cda_augment", "provenance")
    check(len(cb.cds_substitute(corpus)) == len(corpus), "cds keeps size")
    check(cb.duplicate_random(corpus, 2, seed=1).sentences() == cb.duplicate_random(corpus, 2, seed=1).sentences(),
          "seeded duplication")

    rates, flagged = cb.toxicity_rates(corpus)
    check(rates["flagged_pct"] == 25.0 and flagged.flagged() == [2], "toxicity flags")
    check(len(cb.remove_toxic(flagged)) == 3, "remove_toxic")
    check(cb.remove_random(flagged, 1, seed=3).flagged() != [], "remove_random spares flagged")

    train = cb.Corpus(["The dog barked. The dog ran. A cat sat. The cat ran."] * 20)
    lm = cb.NGramScorer(train, order=2, min_count=1)
    total, mean = lm.sequence_logprob("The dog ran.")
    check(total < 0 and abs(total - sum(lm.token_logprobs("The dog ran."))) < 1e-9, "n-gram scoring")
    mp = cb.score_minimal_pairs(lm, [("The dog ran.", "Dog the ran.", "order")])
    check(mp["score"] == 100.0, "minimal pairs")
    crows = cb.score_crows(lm, [("The dog ran.", "The cat ran.", "animal")])
    check(0.0 <= crows["score"] <= 100.0, "crows")
    ss = cb.score_stereoset_intra(lm, [("The BLANK ran.", "dog", "cat", "sky", "animal")])
    check("lms" in ss, "stereoset")
    ewok = cb.score_ewok(lm, [(("A dog barked.", "A cat sat."), ("The dog ran.", "The cat ran."), "animal")])
    check(ewok["scored"] == 1, "ewok")

    rng = random.Random(0)
    labels = [i % 2 for i in range(200)]
    rows = [[rng.gauss(0, 1) + (2.0 if j == 0 and y else 0.0) for j in range(5)] for y in labels]
    proj = cb.inlp_fit(rows, labels)
    check(proj.idempotence_error < 1e-8 and proj.rank == 5 - len(proj.removed_directions()), "inlp")
    check(all(abs(r[0]) < 5 for r in proj.apply(rows)), "inlp apply")

    pairs = [([rng.gauss(0, 1) + 1.0, rng.gauss(0, 1)], [rng.gauss(0, 1) - 1.0, rng.gauss(0, 1)]) for _ in range(20)]
    sub = cb.sentdebias_fit(pairs, components=1)
    c = sub.components[0]
    out = sub.apply([[1.0, 2.0]])[0]
    check(abs(out[0] * c[0] + out[1] * c[1]) < 1e-12, "sent-debias")

    check(abs(cb.pearson([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) < 1e-12, "pearson")
    rho = cb.cca_first([[1.0], [2.0], [3.0], [4.0]], [[2.0], [1.0], [4.0], [3.0]], ridge=1e-12)
    check(abs(rho - 0.6) < 1e-8, "cca")

    try:
        cb.duplicate_random(cb.Corpus([]), 1, seed=0)
    except ValueError:
        check(True, "errors surface as ValueError")
    else:
        check(False, "errors surface as ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
