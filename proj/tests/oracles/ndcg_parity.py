#!/usr/bin/env python3
"""Builds the frozen nDCG parity fixture from reference trec_eval.

Each of the N instances is one query with at most 8 candidate documents,
grades 0-3, scores drawn from a small set so ties are common, some run
documents left unjudged and some judged documents left out of the run. A few
queries exist only in the qrels (expected nDCG 0) and a few only in the run
(ignored). Expected values come from pytrec_eval (trec_eval 9.x) `ndcg_cut`.

    pip install pytrec-eval-terrier
    python3 tests/oracles/ndcg_parity.py tests/fixtures/ndcg_parity 1100
"""

import random
import sys
from pathlib import Path

import pytrec_eval


def main():
    out = Path(sys.argv[1])
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 1100
    rnd = random.Random(20240611)
    out.mkdir(parents=True, exist_ok=True)

    qrels, run = {}, {}
    for i in range(n):
        qid = f"i{i:04d}"
        ndocs = rnd.randint(1, 8)
        docs = [f"D{rnd.randint(0, 30):02d}" for _ in range(ndocs)]
        docs = sorted(set(docs))
        ties = rnd.choice([2, 3, 5, 1000])
        judged = {}
        for d in docs:
            if rnd.random() < 0.8:
                judged[d] = rnd.choice([0, 0, 1, 1, 2, 3])
        # judged documents the run never retrieved
        for _ in range(rnd.randint(0, 3)):
            judged[f"X{rnd.randint(0, 9)}"] = rnd.choice([0, 1, 2, 3])
        if judged:
            qrels[qid] = judged
        scored = {d: round(rnd.randint(0, ties) * 0.5 - 1.0, 3) for d in docs}
        kind = rnd.random()
        if kind < 0.02 and judged:
            continue  # query only in qrels
        run[qid] = scored
        if kind > 0.98:
            qrels.pop(qid, None)  # query only in the run

    evaluator = pytrec_eval.RelevanceEvaluator(qrels, {"ndcg_cut.5,10"})
    measures = evaluator.evaluate(run)

    with open(out / "qrels.txt", "w") as f:
        for qid in sorted(qrels):
            for d in sorted(qrels[qid]):
                f.write(f"{qid} 0 {d} {qrels[qid][d]}\n")
    with open(out / "run.trec", "w") as f:
        for qid in sorted(run):
            ranked = sorted(run[qid].items(), key=lambda kv: (-kv[1], kv[0]))
            # rank column deliberately disagrees with the score order on ties
            for rank, (d, s) in enumerate(ranked, start=1):
                f.write(f"{qid} Q0 {d} {rank} {s!r} ref\n")
    with open(out / "expected.tsv", "w") as f:
        f.write("qid\tndcg_cut_5\tndcg_cut_10\n")
        for qid in sorted(qrels):
            m = measures.get(qid)
            v5 = m["ndcg_cut_5"] if m else 0.0
            v10 = m["ndcg_cut_10"] if m else 0.0
            f.write(f"{qid}\t{v5!r}\t{v10!r}\n")


if __name__ == "__main__":
    main()
