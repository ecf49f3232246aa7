"""Builds the 4-sample scripted experiment fixture and its expected aggregates.

Writes tests/fixtures/eval/{dataset.jsonl,experiment.json,expected.json}.
Translations are fixed by the scripted translator, so aggregates follow
from bleu_oracle and formality_oracle without running any chain.
"""
import json
import os
import sys

sys.path.insert(0, os.path.dirname(__file__))
import bleu_oracle as bo  # noqa: E402
import formality_oracle as fo  # noqa: E402

QUESTION = 'Is "you" formal or informal?'
ANSWER = '"you" is formal.'

# id, source, context, target, gold, icp output, no-extras output
ROWS = [
    ("en-es-formality-e1", "Are you coming with your wife?", "Welcome, Mrs. Vidal.",
     "¿Usted viene con su esposa?", "formal",
     "¿Usted viene con su esposa?", "¿Tú vienes con tu esposa?"),
    ("en-es-formality-e2", "Thank you for your help, sir.", "The manager nods at the guest.",
     "Gracias por su ayuda, señor.", "formal",
     "Gracias por su ayuda, señor.", "Gracias por la ayuda, señor."),
    ("en-es-formality-e3", "You are very kind.", "Carlos hugs his little sister.",
     "Tú eres muy amable.", "informal",
     "Tú eres muy amable.", "Tú eres muy amable."),
    ("en-es-formality-e4", "Are you sure of that?", "The judge addresses the witness.",
     "¿Está usted seguro de eso?", "formal",
     "¿Está usted seguro de eso?", "¿Estás seguro de eso?"),
]


def relaxed(text):
    return fo.labels(fo.latin_markers(text, "es"), "es")[1] if text else "undetermined"


def row(outputs, mode):
    refs = [r[3] for r in ROWS]
    sent = [bo.bleu([h], [r]) for h, r in zip(outputs, refs)]
    labels = [relaxed(h) for h in outputs]
    correct = [1.0 if lab == r[4] else 0.0 for lab, r in zip(labels, ROWS)]
    return {
        "mode": mode,
        "n": len(ROWS),
        "failed": 0,
        "bleu": bo.bleu(outputs, refs),
        "sentence_bleu": sum(sent) / len(sent),
        "f_acc": sum(correct) / len(correct),
        "f_labels": labels,
    }


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "fixtures", "eval")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "dataset.jsonl"), "w") as f:
        for sid, src, ctx, tgt, gold, _, _ in ROWS:
            f.write(json.dumps({"id": sid, "ambiguity": "formality", "lang_pair": "en-es",
                                "source": src, "context": ctx, "target": tgt, "label": gold},
                               ensure_ascii=False) + "\n")
    script = []
    for _, src, _, _, _, icp, noextras in ROWS:
        script.append({"match": "suffix", "pattern": f"S: {src}\nQ:", "response": f" {QUESTION}\nS: x"})
        script.append({"match": "suffix", "pattern": f"S: {src}\nQ: {QUESTION}\nU: {ANSWER}\nA: ",
                       "response": f"{icp}\n\nS: x"})
        script.append({"match": "suffix", "pattern": f"T: {src}\nA:", "response": f" {noextras}\nT: x"})
    config = {
        "dataset": "dataset.jsonl",
        "modes": ["icp", "no_extras"],
        "translator": {"backend_id": "scripted-mt", "kind": "scripted", "script": script,
                       "stop": ["\n\n", "\nS:", "\nT:"]},
        "user": {"kind": "scripted", "default": ANSWER},
        "templates": {"es": {"ask": "es-formality-ask", "translate": "es-formality-translate",
                             "no_extras": "es-formality-noextras"}},
        "metrics": ["bleu", "f_acc", "bias"],
        "seed": 7,
        "resamples": 200,
        "parallelism": 3,
        "output_dir": "out",
    }
    with open(os.path.join(out_dir, "experiment.json"), "w") as f:
        json.dump(config, f, indent=1, ensure_ascii=False)
        f.write("\n")
    expected = [row([r[5] for r in ROWS], "icp"), row([r[6] for r in ROWS], "no_extras")]
    with open(os.path.join(out_dir, "expected.json"), "w") as f:
        json.dump(expected, f, indent=1, ensure_ascii=False)
        f.write("\n")
    print(json.dumps(expected, indent=1, ensure_ascii=False))


if __name__ == "__main__":
    main()
