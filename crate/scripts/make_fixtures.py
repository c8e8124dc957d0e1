#!/usr/bin/env python3
"""Regenerates the fixture lexicon, dictionary and toy parallel corpus under
crates/core/data/. Output is deterministic."""

import os
import random

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "data")

# Regular first-group verbs; stems avoid -ger/-cer spelling alternations.
ER_VERBS = """parler regarder chercher porter trouver garder laver tirer penser
déconcerter aimer donner jouer marcher montrer fermer demander écouter entrer
rester tomber passer arriver chanter danser dessiner habiter étudier oublier
préparer quitter raconter regretter rêver sauter signer sonner souhaiter
tourner travailler traverser tuer visiter voler accepter accompagner adorer
ajouter allumer améliorer apporter arrêter attacher brûler cacher casser
causer chasser compter continuer couper coûter crier décider déclarer
délivrer dépenser désirer deviner discuter durer échapper éclairer emprunter
enseigner éviter expliquer exprimer fumer gagner goûter griller hésiter
ignorer imaginer inviter limiter louer mériter monter noter observer
organiser pardonner pleurer pousser présenter prêter prouver quêter refuser
remarquer réparer répéter rouler saluer sembler séparer supporter tenter
terminer toucher tromper user verser""".split()

PRESENT = ["e", "es", "e", "ons", "ez", "ent"]
IMPERFECT = ["ais", "ais", "ait", "ions", "iez", "aient"]
FUTURE = ["erai", "eras", "era", "erons", "erez", "eront"]
PERSONS = [("1", "s"), ("2", "s"), ("3", "s"), ("1", "p"), ("2", "p"), ("3", "p")]

IRREGULAR = {
    "être": {"P": "suis es est sommes êtes sont", "I": "étais étais était étions étiez étaient",
             "F": "serai seras sera serons serez seront", "part": "été été été été"},
    "avoir": {"P": "ai as a avons avez ont", "I": "avais avais avait avions aviez avaient",
              "F": "aurai auras aura aurons aurez auront", "part": "eu eue eus eues"},
    "devenir": {"P": "deviens deviens devient devenons devenez deviennent",
                "I": "devenais devenais devenait devenions deveniez devenaient",
                "F": "deviendrai deviendras deviendra deviendrons deviendrez deviendront",
                "part": "devenu devenue devenus devenues"},
    "aller": {"P": "vais vas va allons allez vont", "I": "allais allais allait allions alliez allaient",
              "F": "irai iras ira irons irez iront", "part": "allé allée allés allées"},
    "faire": {"P": "fais fais fait faisons faites font",
              "I": "faisais faisais faisait faisions faisiez faisaient",
              "F": "ferai feras fera ferons ferez feront", "part": "fait faite faits faites"},
}

NOUNS_M = """chat chien livre oiseau arbre jardin bateau train stylo mur vélo
cheval journal ami enfant garçon homme médecin lit pain fromage gâteau château
chapeau couteau pays village marché café restaurant musée film disque tableau
bureau camion avion""".split()
NOUNS_F = """maison voiture table porte fleur rue ville chaise fenêtre lettre
pomme fille femme amie école église boutique chambre cuisine robe chemise
montagne rivière plage forêt lampe photo chanson histoire idée médecine
clé""".split()

ADJECTIVES = """grand petit vert noir intéressant joli lourd froid chaud fort
content parfait prudent élégant patient charmant gris bleu rouge jaune
rapide calme facile simple triste riche pauvre jeune sage""".split()

CLOSED = [
    ("le", "le", "det-#-#-m-s-l"), ("la", "le", "det-#-#-f-s-l"),
    ("les", "le", "det-#-#-m-p-l"), ("les", "le", "det-#-#-f-p-l"),
    ("un", "un", "det-#-#-m-s-l"), ("une", "un", "det-#-#-f-s-l"),
    ("des", "un", "det-#-#-m-p-l"), ("des", "un", "det-#-#-f-p-l"),
    ("je", "je", "cln-#-1-#-s-l"), ("tu", "tu", "cln-#-2-#-s-l"),
    ("il", "il", "cln-#-3-m-s-l"), ("elle", "il", "cln-#-3-f-s-l"),
    ("nous", "nous", "cln-#-1-#-p-l"), ("vous", "vous", "cln-#-2-#-p-l"),
    ("ils", "il", "cln-#-3-m-p-l"), ("elles", "il", "cln-#-3-f-p-l"),
    ("ça", "ça", "pro-#-3-m-s-l"), ("lui", "lui", "pro-#-3-m-s-l"),
    ("en", "en", "prep-#-#-#-#-l"), ("de", "de", "prep-#-#-#-#-l"),
    ("à", "à", "prep-#-#-#-#-l"), ("dans", "dans", "prep-#-#-#-#-l"),
    ("sur", "sur", "prep-#-#-#-#-l"), ("avec", "avec", "prep-#-#-#-#-l"),
    ("pour", "pour", "prep-#-#-#-#-l"), ("sous", "sous", "prep-#-#-#-#-l"),
    ("mais", "mais", "coo-#-#-#-#-l"), ("et", "et", "coo-#-#-#-#-l"),
    ("ou", "ou", "coo-#-#-#-#-l"), ("que", "que", "csu-#-#-#-#-l"),
    ("voilà", "voilà", "adv-#-#-#-#-l"), ("où", "où", "adv-#-#-#-#-l"),
    ("très", "très", "adv-#-#-#-#-l"), ("ici", "ici", "adv-#-#-#-#-l"),
    ("pas", "pas", "adv-#-#-#-#-l"), ("ne", "ne", "adv-#-#-#-#-l"),
    ("aussi", "aussi", "adv-#-#-#-#-l"), ("souvent", "souvent", "adv-#-#-#-#-l"),
    (".", ".", "pct-#-#-#-#-l"), (",", ",", "pct-#-#-#-#-l"),
    ("!", "!", "pct-#-#-#-#-l"), ("?", "?", "pct-#-#-#-#-l"),
]

# Alternate spellings that share a (lemma, tag) key with an earlier entry.
VARIANTS = [
    ("clef", "clé", "nc-#-#-f-s-l"), ("clefs", "clé", "nc-#-#-f-p-l"),
    ("paye", "payer", "v-P-1-#-s-l"), ("payes", "payer", "v-P-2-#-s-l"),
]


def plural(noun):
    if noun.endswith("eau"):
        return noun + "x"
    if noun.endswith("al"):
        return noun[:-2] + "aux"
    if noun[-1] in "sxz":
        return noun
    return noun + "s"


def adjective_forms(adj):
    fem = adj if adj.endswith("e") else adj + "e"
    mp = adj if adj[-1] in "sx" else adj + "s"
    return [(adj, "m", "s"), (fem, "f", "s"), (mp, "m", "p"), (fem + "s", "f", "p")]


def verb_entries(lemma, table):
    rows = [(lemma, lemma, "v-W-#-#-#-l")]
    for tense in ("P", "I", "F"):
        for form, (person, number) in zip(table[tense], PERSONS):
            rows.append((form, lemma, f"v-{tense}-{person}-#-{number}-l"))
    for form, (g, n) in zip(table["part"], [("m", "s"), ("f", "s"), ("m", "p"), ("f", "p")]):
        rows.append((form, lemma, f"vppart-K-#-{g}-{n}-l"))
    return rows


def lexicon():
    rows = list(CLOSED)
    for lemma, forms in IRREGULAR.items():
        rows += verb_entries(lemma, {k: v.split() for k, v in forms.items()})
    for lemma in ER_VERBS + ["payer"]:
        stem = lemma[:-2]
        table = {
            "P": [stem + s for s in PRESENT],
            "I": [stem + s for s in IMPERFECT],
            "F": [stem + s for s in FUTURE],
            "part": [stem + s for s in ["é", "ée", "és", "ées"]],
        }
        rows += verb_entries(lemma, table)
    for gender, nouns in (("m", NOUNS_M), ("f", NOUNS_F)):
        for n in nouns:
            rows.append((n, n, f"nc-#-#-{gender}-s-l"))
            rows.append((plural(n), n, f"nc-#-#-{gender}-p-l"))
    for adj in ADJECTIVES:
        for form, g, n in adjective_forms(adj):
            rows.append((form, adj, f"adj-#-#-{g}-{n}-l"))
    rows += VARIANTS
    return rows


SUBJECTS = [("I", "je", 0), ("you", "tu", 1), ("he", "il", 2), ("she", "elle", 2),
            ("we", "nous", 3), ("they", "ils", 5)]
VERBS = [("watch", "watches", "regard"), ("find", "finds", "trouv"), ("keep", "keeps", "gard"),
         ("wash", "washes", "lav"), ("carry", "carries", "port"), ("pull", "pulls", "tir")]
NOUNS = [("cat", "chat", "m"), ("dog", "chien", "m"), ("book", "livre", "m"),
         ("bird", "oiseau", "m"), ("house", "maison", "f"), ("car", "voiture", "f"),
         ("table", "table", "f"), ("door", "porte", "f")]
SIZES = [("big", "grand"), ("small", "petit")]
COLORS = [("black", "noir"), ("green", "vert")]
EN_PLURAL = {"cat": "cats", "dog": "dogs", "book": "books", "bird": "birds",
             "house": "houses", "car": "cars", "table": "tables", "door": "doors"}


def agree(adj, gender, number):
    return next(a for a, g, n in adjective_forms(adj) if g == gender and n == number)


def cap(s):
    return s[0].upper() + s[1:]


def corpus():
    rng = random.Random(20170405)
    pairs = [
        ("but here is where it becomes interesting .", "mais voilà où ça devient intéressant ."),
        ("we in medicine , I think , are baffled .", "nous , en médecine , je pense , sommes déconcertés ."),
        ("they are baffled .", "Ils sont déconcertés ."),
        ("it becomes interesting .", "Ça devient intéressant ."),
    ]
    seen = set(p[0] for p in pairs)
    while len(pairs) < 64:
        en_subj, fr_subj, slot = rng.choice(SUBJECTS)
        en_base, en_3s, fr_stem = rng.choice(VERBS)
        en_noun, fr_noun, gender = rng.choice(NOUNS)
        plural_obj = rng.random() < 0.3
        size = rng.choice([None] + SIZES)
        color = rng.choice([None, None] + COLORS)
        en_verb = en_3s if slot == 2 else en_base
        fr_verb = fr_stem + PRESENT[slot]
        number = "p" if plural_obj else "s"
        en = [en_subj, en_verb, "the"]
        fr = [fr_subj, fr_verb]
        fr.append("les" if plural_obj else ("le" if gender == "m" else "la"))
        if size:
            en.append(size[0])
            fr.append(agree(size[1], gender, number))
        if color:
            en.append(color[0])
        en.append(EN_PLURAL[en_noun] if plural_obj else en_noun)
        fr.append(plural(fr_noun) if plural_obj else fr_noun)
        if color:
            fr.append(agree(color[1], gender, number))
        en.append(".")
        fr.append(".")
        en[0] = cap(en[0])
        fr[0] = cap(fr[0])
        line = " ".join(en)
        if line in seen:
            continue
        seen.add(line)
        pairs.append((line, " ".join(fr)))
    return pairs


DICTIONARY = [
    ("baffled", "déconcerté"), ("cat", "chat"), ("cats", "chats"), ("dog", "chien"),
    ("dogs", "chiens"), ("book", "livre"), ("books", "livres"), ("bird", "oiseau"),
    ("birds", "oiseaux"), ("house", "maison"), ("houses", "maisons"), ("car", "voiture"),
    ("cars", "voitures"), ("table", "table"), ("tables", "tables"), ("door", "porte"),
    ("doors", "portes"), ("big", "grand"), ("small", "petit"), ("black", "noir"),
    ("green", "vert"), ("interesting", "intéressant"), ("medicine", "médecine"),
    ("think", "pense"), ("here", "voilà"), ("where", "où"), ("but", "mais"),
    ("becomes", "devient"), ("watch", "regarder"), ("find", "trouver"), ("keep", "garder"),
    ("wash", "laver"), ("carry", "porter"), ("pull", "tirer"), ("the", "le"),
    ("we", "nous"), ("they", "ils"), ("he", "il"), ("she", "elle"), ("you", "tu"),
    ("i", "je"), ("is", "est"), ("are", "sont"), ("in", "en"), ("it", "ça"),
]


def main():
    os.makedirs(OUT, exist_ok=True)
    with open(os.path.join(OUT, "lexicon.tsv"), "w", encoding="utf-8") as f:
        f.write("# surface\tlemma\tfactors\n")
        for row in lexicon():
            f.write("\t".join(row) + "\n")
    with open(os.path.join(OUT, "dict.en-fr.tsv"), "w", encoding="utf-8") as f:
        for src, tgt in DICTIONARY:
            f.write(f"{src}\t{tgt}\n")
    pairs = corpus()
    with open(os.path.join(OUT, "toy.en"), "w", encoding="utf-8") as f:
        f.write("".join(en + "\n" for en, _ in pairs))
    with open(os.path.join(OUT, "toy.fr"), "w", encoding="utf-8") as f:
        f.write("".join(fr + "\n" for _, fr in pairs))


if __name__ == "__main__":
    main()
