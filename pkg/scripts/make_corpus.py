"""Generate the bundled training corpus.

Sentences come from a stochastic grammar with number agreement across
optional relative clauses, coordination ("both X and Y" forces plural,
"either X or Y" agrees with the second conjunct), topic-conditioned word
choice with long topic persistence, per-topic proper names, and paired
quotes.  The vocabulary is large enough (~400 types) that heavily
rank-constrained recurrent models underfit while better-parameterized
ones keep improving.  Deterministic given the seed.
"""

import pathlib

import numpy as np


def _t(nouns, verbs_s, verbs_p, adjs, places, names):
    return {"nouns": nouns.split(), "verbs_s": verbs_s.split(),
            "verbs_p": verbs_p.split(), "adjs": adjs.split(),
            "places": places.split(), "names": names.split()}


TOPICS = {
    "farm": _t(
        "cat dog horse cow hen farmer sheep goat pig duck mule calf lamb "
        "rooster donkey foal",
        "runs sleeps eats jumps waits hides grazes naps trots snorts",
        "run sleep eat jump wait hide graze nap trot snort",
        "old gray quick lazy small loud muddy spotted gentle stubborn",
        "barn field yard hill pond stable meadow orchard",
        "Bess Clover Daisy Rex Ned Hazel Bruno Pip"),
    "town": _t(
        "baker clerk driver teacher child doctor guard singer tailor barber "
        "nurse porter grocer mason judge printer",
        "works walks talks reads writes sings shops votes paints bakes",
        "work walk talk read write sing shop vote paint bake",
        "busy tired young kind tall quiet polite clever stern cheerful",
        "market school street shop station library square office",
        "Ada Felix Greta Hugo Irene Jonas Klara Louis"),
    "sea": _t(
        "sailor gull whale crab captain fish pilot diver mate seal otter "
        "dolphin shark cook bosun oyster",
        "swims drifts dives floats turns calls steers rows anchors surfaces",
        "swim drift dive float turn call steer row anchor surface",
        "wet cold deep salty dark calm rough briny distant patient",
        "bay reef shore deck harbor galley lagoon strait",
        "Marla Otto Perla Quinn Rolf Sela Tomas Una"),
    "forest": _t(
        "fox owl deer wolf bear hare badger beetle crow elk lynx mole "
        "raven squirrel stag toad",
        "prowls hoots leaps howls digs climbs perches listens burrows stalks",
        "prowl hoot leap howl dig climb perch listen burrow stalk",
        "silent swift shaggy wary pale thorny mossy hollow ancient dim",
        "glade thicket ridge den stream hollow grove trail",
        "Ash Birch Cedar Fern Moss Rowan Sage Thorn"),
    "castle": _t(
        "knight squire king queen herald monk scribe cook falcon jester "
        "duke page abbot smith archer steward",
        "rides guards feasts kneels studies trains jousts prays forges scouts",
        "ride guard feast kneel study train joust pray forge scout",
        "brave noble solemn rusty golden weary loyal grim ornate humble",
        "keep tower chapel court moat armory cellar gatehouse",
        "Alba Bran Cora Derol Edda Floris Gwen Hal"),
    "circus": _t(
        "clown juggler acrobat tamer magician drummer dancer vendor pony "
        "strongman rider usher mime tumbler parrot monkey",
        "tumbles juggles balances bows vanishes drums twirls whistles claps "
        "marches",
        "tumble juggle balance bow vanish drum twirl whistle clap march",
        "merry daring painted nimble shiny dizzy bold sly spangled breathless",
        "tent ring wagon stage booth arena plaza caravan",
        "Bindi Coco Dot Enzo Fifi Gogo Lola Zuzu"),
}

TRANSITIVE_S = ["sees", "follows", "likes", "helps", "watches", "greets",
                "chases", "teaches", "fears", "joins"]
TRANSITIVE_P = ["see", "follow", "like", "help", "watch", "greet", "chase",
                "teach", "fear", "join"]
ADVERBS = ["slowly", "quickly", "often", "rarely", "again", "today",
           "quietly", "gladly", "twice", "soon"]


def noun_phrase(rng, topic, plural):
    """Returns (words, plural) — coordination can force the number."""
    roll = rng.random()
    if not plural and roll < 0.12:
        # proper name: singular, no article
        return [rng.choice(topic["names"])], False
    if roll > 0.88:
        # coordination: "both X and Y" is plural, "either X or Y"
        # agrees with the second conjunct
        n1, n2 = rng.choice(topic["nouns"], size=2, replace=False)
        if rng.random() < 0.5:
            return ["both", "the", n1, "and", "the", n2 + "s"], True
        return ["either", "the", n1 + "s", "or", "the", n2], False
    words = ["the"]
    if rng.random() < 0.4:
        words.append(rng.choice(topic["adjs"]))
    noun = rng.choice(topic["nouns"])
    words.append(noun + "s" if plural else noun)
    return words, plural


def sentence(rng, topic_name):
    topic = TOPICS[topic_name]
    words, plural = noun_phrase(rng, topic, rng.random() < 0.5)
    # optional relative clause with its own (distracting) subject number
    if rng.random() < 0.4:
        inner, inner_plural = noun_phrase(rng, topic, rng.random() < 0.5)
        words.append("that")
        words += inner
        words.append(rng.choice(TRANSITIVE_P if inner_plural else TRANSITIVE_S))
    # main verb agrees with the head noun phrase, across the clause
    if rng.random() < 0.5:
        words.append(rng.choice(topic["verbs_p"] if plural else topic["verbs_s"]))
    else:
        words.append(rng.choice(TRANSITIVE_P if plural else TRANSITIVE_S))
        obj, _ = noun_phrase(rng, topic, rng.random() < 0.5)
        words += obj
    if rng.random() < 0.4:
        words.append(rng.choice(ADVERBS))
    if rng.random() < 0.3:
        words += ["near", "the", rng.choice(topic["places"])]
    if rng.random() < 0.1:
        quoted = sentence(rng, topic_name)[:-1]
        words += ["and", "says", '"'] + quoted + ['"']
    words.append(".")
    return words


def generate(n_tokens=60_000, seed=20_240_817):
    rng = np.random.default_rng(seed)
    out = []
    topic = "farm"
    while len(out) < n_tokens:
        # topics persist for a long stretch of sentences
        if rng.random() < 0.05:
            topic = rng.choice(list(TOPICS))
        out += sentence(rng, topic)
    return out[:n_tokens]


if __name__ == "__main__":
    tokens = generate()
    dest = pathlib.Path(__file__).resolve().parents[1] / "src" / "dopedmat" / \
        "data" / "corpus.txt"
    # wrap lines at sentence ends for readability
    lines, cur = [], []
    for t in tokens:
        cur.append(t)
        if t == ".":
            lines.append(" ".join(cur))
            cur = []
    if cur:
        lines.append(" ".join(cur))
    dest.write_text("\n".join(lines) + "\n")
    vocab = sorted(set(tokens))
    print(f"wrote {len(tokens)} tokens, {len(vocab)} distinct, to {dest}")
