"""Reference implementation of the T-V marker rules, written separately from
the C++ engine. Produces tests/fixtures/formality_cases.json from the
sentence table below. Every row was also checked by hand."""
import json
import re
import sys
import unicodedata
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]


def fold(s, case=True, marks=True):
    s = unicodedata.normalize("NFC", s)
    if case:
        s = s.casefold()
    if marks:
        s = "".join(c for c in unicodedata.normalize("NFD", s)
                    if unicodedata.category(c) != "Mn")
        s = unicodedata.normalize("NFC", s)
    return s


def tokens(s):
    return re.findall(r"[^\W_]+", unicodedata.normalize("NFC", s))


def function_words(lang):
    data = json.loads((ROOT / "data" / "rules" / f"{lang}.json").read_text())
    return {fold(w) for w in data.get("function_words", [])}


ES = dict(
    pron_f={"usted"}, pron_i={"tu", "te", "vos", "vosotros"},
    det_f={"su"}, det_i={"tu", "vosotros", "vosotras"},
    verb_i=("s", "ste", "os"), verb_i_all=True, verb_f=None,
    formal=("pron", "det"), informal=("verb", "pron", "det"))
FR = dict(
    pron_f={"vous"}, pron_i={"tu"},
    det_f={"vos", "votre"}, det_i={"tes", "ton", "ta", "toi"},
    verb_i=("x", "s", "ons"), verb_i_all=False, verb_f=("ez",),
    formal=("verb", "pron", "det"), informal=("verb", "pron", "det"))


def latin_markers(text, lang):
    r = ES if lang == "es" else FR
    fw = function_words(lang)
    m = {k: [] for k in ("is_verb_formal", "is_verb_informal", "is_pronoun_formal",
                         "is_pronoun_informal", "is_determinant_formal",
                         "is_determinant_informal")}
    verbs = []
    for t in tokens(text):
        n = fold(t)
        hit = False
        for key, name in (("pron_f", "is_pronoun_formal"), ("pron_i", "is_pronoun_informal"),
                          ("det_f", "is_determinant_formal"), ("det_i", "is_determinant_informal")):
            if n in r[key]:
                m[name].append(t)
                hit = True
        if not hit and len(t) >= 4 and n not in fw:
            verbs.append(t)

    def ends(v, sufs):
        n = fold(v)
        return any(len(n) > len(s) and n.endswith(s) for s in sufs)

    if verbs:
        hits = [v for v in verbs if ends(v, r["verb_i"])]
        if hits and (not r["verb_i_all"] or len(hits) == len(verbs)):
            m["is_verb_informal"] = hits
        if r["verb_f"]:
            m["is_verb_formal"] = [v for v in verbs if ends(v, r["verb_f"])]
    return m


def de_markers(text):
    m = {k: [] for k in ("is_verb_formal", "is_verb_informal", "is_pronoun_formal",
                         "is_pronoun_informal", "is_determinant_formal",
                         "is_determinant_informal")}
    bang = "!" in text
    for t in tokens(text):
        if not bang and t in {"Sie", "Ihr", "Ihre", "Ihren", "Ihrem", "Ihrer", "Ihres"}:
            m["is_pronoun_formal"].append(t)
        if bang and t in {"er", "sie", "es", "ihr"}:
            m["is_pronoun_formal"].append(t)
        informal = {"du", "dein", "deine", "deinen", "deinem", "deiner", "deines", "dich"}
        if t in informal or t in {w.capitalize() for w in informal}:
            m["is_pronoun_informal"].append(t)
    return m


def labels(m, lang):
    f = {k for k, v in m.items() if v}
    any_f = any(k.endswith("_formal") for k in f)
    any_i = any(k.endswith("_informal") for k in f)
    if lang == "de":
        sf, si = "is_pronoun_formal" in f, "is_pronoun_informal" in f
    else:
        r = ES if lang == "es" else FR
        name = {"verb": "is_verb_", "pron": "is_pronoun_", "det": "is_determinant_"}
        sf = all(name[x] + "formal" in f for x in r["formal"])
        si = all(name[x] + "informal" in f for x in r["informal"])

    def lab(a, b):
        return "formal" if a and not b else "informal" if b and not a else "undetermined"
    return lab(sf, si), lab(any_f, any_i)


CASES = {
    "es": [
        "¿Puedo ayudarle, usted primero?",
        "Tú piensas que si uso lentes...",
        "",
        "Usted puede dejar su abrigo aquí.",
        "Tú tienes tu libro.",
        "Tú tienes tus libros.",
        "Usted tiene tu libro.",
        "Te quiero mucho.",
        "¿Vosotros venís mañana?",
        "Gracias por su ayuda, señor.",
        "Usted es muy amable y su casa es preciosa.",
        "Vos sabés que te quiero.",
        "Tú eres.",
        "Hola, ¿cómo estás?",
        "Buenos días a todos.",
        "¿Quiere usted un café?",
        "Dime lo que quieras.",
        "Lo hiciste tú.",
        "Su hermano llamó ayer.",
        "Usted y tú tienen que hablar.",
        "Señora, usted olvidó su paraguas.",
        "Necesitas descansar.",
        "Vosotras tenéis razón.",
        "Te lo dije.",
        "¿Tú vienes?",
        "¿Usted viene con su esposa?",
        "Eso es todo.",
        "Está bien, señor.",
        "¿Te gustas?",
        "Tú y vosotros sois amigos.",
        "Usted es tu amigo.",
        "Su majestad, usted manda.",
        "USTED PUEDE PASAR CON SU PERRO.",
    ],
    "fr": [
        "Plus vous serez proche de lui, mieux cela sera.",
        "Ceci est pour vous.",
        "Tu viens avec vous ?",
        "",
        "Vous avez oublié votre parapluie.",
        "Tu as oublié ton parapluie.",
        "Tu es là ?",
        "Vous êtes très aimable.",
        "Voulez-vous votre café maintenant ?",
        "Je pense à toi.",
        "Tu prends tes affaires et tu pars.",
        "Merci pour votre aide.",
        "Allons-y.",
        "Je peux vous aider ?",
        "Prenez votre temps, monsieur.",
        "Tu veux ta veste ?",
        "Tu sais, ton frère est parti.",
        "Vous et toi, vous venez.",
        "C'est pour toi.",
        "Entrez, je vous prie.",
        "Tu dois partir.",
        "Avez-vous vos papiers ?",
        "Il fait beau aujourd'hui.",
        "Donnez-moi votre main.",
        "Écoute, tu as ta chance.",
        "Pouvez-vous répéter ?",
        "Tu connais vos voisins ?",
        "Je ne sais pas.",
        "Tu aimes ton travail ?",
        "Vous voulez du thé ?",
        "Merci beaucoup.",
        "TU AS TON BILLET ?",
    ],
    "de": [
        "Können Sie mir helfen?",
        "Kannst du mir helfen?",
        "",
        "Helfen Sie mir!",
        "Ist das Ihr Auto?",
        "Ist das dein Auto?",
        "Ist das Ihr Auto und dein Haus?",
        "Wo ist er!",
        "Sie kommt morgen.",
        "sie kommt morgen.",
        "Ich liebe dich.",
        "Haben Sie Ihren Schlüssel?",
        "Hast du deinen Schlüssel?",
        "Das ist es!",
        "Komm her!",
        "Danke für Ihre Hilfe.",
        "Danke für deine Hilfe.",
        "Wie geht es Ihnen?",
        "Wie geht es dir?",
        "Wo ist deine Mutter!",
        "Sie und du.",
        "Ihr seid spät.",
        "Er ist nett.",
        "Nehmen Sie Platz.",
        "Du bist mein Freund!",
        "Ich sehe es.",
        "Ihres ist größer.",
        "Das gehört deiner Schwester.",
        "Ihrem Bruder geht es gut.",
        "Gib es ihr!",
        "Guten Morgen.",
        "DU BIST DA.",
    ],
}


def main():
    rows = []
    for lang, sents in CASES.items():
        for s in sents:
            m = latin_markers(s, lang) if lang in ("es", "fr") else de_markers(s)
            strict, relaxed = labels(m, lang)
            rows.append({"lang": lang, "text": s,
                         "markers": {k: v for k, v in m.items() if v},
                         "strict": strict, "relaxed": relaxed})
    out = ROOT / "tests" / "fixtures" / "formality_cases.json"
    out.write_text(json.dumps(rows, ensure_ascii=False, indent=1) + "\n")
    if "-v" in sys.argv:
        for r in rows:
            print(r["lang"], r["strict"][:4], r["relaxed"][:4], r["text"], r["markers"])


if __name__ == "__main__":
    main()
