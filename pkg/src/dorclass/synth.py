"""Seeded generators for test corpora.

``synthetic_corpus`` builds separable multi-label text: every class owns a set
of signature tokens and each document mixes the signatures of its labels with
shared filler.  ``fixture_records`` builds DataCite XML records whose fate
under cleaning is known in advance.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .clean import LabeledPayload
from .taxonomy import N_LABELS

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


def _pseudo_words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        n_syl = int(rng.integers(2, 4))
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(n_syl))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


@dataclass(frozen=True)
class SyntheticSpec:
    n_docs: int = 10_000
    n_classes: int = N_LABELS
    signature_size: int = 50
    filler_size: int = 2_000
    signatures_per_label: int = 8
    filler_per_doc: int = 20
    p_second_label: float = 0.5
    seed: int = 0


def synthetic_corpus(spec: SyntheticSpec = SyntheticSpec()) -> list[LabeledPayload]:
    """Documents with one label, or two with probability ``p_second_label``."""
    rng = np.random.default_rng(spec.seed)
    taken: set[str] = set()
    signatures = [_pseudo_words(rng, spec.signature_size, taken) for _ in range(spec.n_classes)]
    filler = _pseudo_words(rng, spec.filler_size, taken)
    # mild imbalance so label weights are not all 1
    prior = 1.0 / (1.0 + 0.1 * np.arange(spec.n_classes))
    prior /= prior.sum()
    docs = []
    for i in range(spec.n_docs):
        size = 2 if rng.random() < spec.p_second_label else 1
        labels = rng.choice(spec.n_classes, size=size, replace=False, p=prior)
        words = [filler[j] for j in rng.integers(0, len(filler), spec.filler_per_doc)]
        for label in labels:
            sig = signatures[label]
            words += [sig[j] for j in rng.integers(0, len(sig), spec.signatures_per_label)]
        rng.shuffle(words)
        docs.append(LabeledPayload(f"synth:{i:05d}", " ".join(words), frozenset(int(l) for l in labels)))
    return docs


# --- DataCite fixture ----------------------------------------------------

_EN_SENTENCES = [
    "The data were collected during a field campaign and include measurements from several sites.",
    "This dataset contains the results of a survey carried out over two years in the region.",
    "Samples were processed in the laboratory and the values are given for each station.",
    "The files provide observations of the study area together with the methods used.",
    "We report the raw and processed values used for the analysis in the related article.",
    "Records describe the time series of each variable and the quality control steps applied.",
    "These tables list the model output for the scenarios described in the documentation.",
    "The collection includes images, notes and coordinates from the first and second expedition.",
]
_DE_SENTENCES = [
    "Die Daten wurden im Feld erhoben und anschließend im Labor geprüft und ausgewertet.",
    "Diese Sammlung enthält Messwerte verschiedener Stationen über einen Zeitraum von zwei Jahren.",
    "Proben wurden getrocknet, gewogen und nach einem standardisierten Verfahren analysiert.",
]
_TOPICS = ["soil moisture", "bird song", "river sediment", "urban traffic", "protein folding",
           "coral reef", "election turnout", "glacier melt", "crop yield", "heart rate"]

# (scheme attributes, value, payload labels) for subjects the default table maps
_MAPPABLE = [
    ({"subjectScheme": "ANZSRC"}, "0602 Ecology", [4]),
    ({"subjectScheme": "FOR"}, "0403 Geology", [3]),
    ({"subjectScheme": "ddc"}, "550 Earth sciences", [3]),
    ({"subjectScheme": "ANZSRC"}, "1117 Public Health and Health Services", [8]),
    ({"subjectScheme": "ANZSRC"}, "0801 Artificial Intelligence and Image Processing", [6]),
    ({"subjectScheme": "ddc"}, "340 Law", [15]),
]
FIXTURE_CATEGORIES = ("mappable", "unqualified", "unmapped", "linsearch", "duplicate", "short", "non_english")


def _datacite_xml(ident: str, titles, descriptions, subjects, year: int) -> str:
    from xml.sax.saxutils import escape, quoteattr

    subj = "".join(
        "<subject" + "".join(f" {k}={quoteattr(v)}" for k, v in attrs.items()) + f">{escape(value)}</subject>"
        for attrs, value in subjects)
    title_xml = "".join(f"<title>{escape(t)}</title>" for t in titles)
    desc_xml = "".join(f'<description descriptionType="Abstract">{escape(d)}</description>' for d in descriptions)
    return (
        '<record xmlns="http://www.openarchives.org/OAI/2.0/">'
        f"<header><identifier>{escape(ident)}</identifier></header>"
        '<metadata><resource xmlns="http://datacite.org/schema/kernel-4">'
        f'<identifier identifierType="DOI">10.0000/{escape(ident.rsplit(":", 1)[-1])}</identifier>'
        f"<titles>{title_xml}</titles><publicationYear>{year}</publicationYear>"
        f"<subjects>{subj}</subjects><descriptions>{desc_xml}</descriptions>"
        "</resource></metadata></record>"
    )


def fixture_records(n: int = 1000, seed: int = 0) -> tuple[list[str], Counter]:
    """Return ``n`` record XML strings and how many fall in each category.

    Category shares are fixed by ``seed``; duplicates repeat the text and
    subjects of an earlier mappable record under a new identifier.
    """
    rng = np.random.default_rng(seed)
    shares = np.array([0.55, 0.10, 0.10, 0.05, 0.08, 0.06, 0.06])
    cats = rng.choice(len(FIXTURE_CATEGORIES), size=n, p=shares)
    out, counts = [], Counter()
    originals: list[tuple] = []
    for i, c in enumerate(cats):
        cat = FIXTURE_CATEGORIES[c]
        if cat == "duplicate" and not originals:
            cat = "mappable"
        ident = f"oai:fixture:{i:04d}"
        year = int(rng.integers(1995, 2021))
        topic = _TOPICS[rng.integers(len(_TOPICS))]
        site = int(rng.integers(1, 100_000))
        title = f"Observations of {topic} at site {site}"
        desc = " ".join(_EN_SENTENCES[j] for j in rng.choice(len(_EN_SENTENCES), 2, replace=False))
        attrs, value, _ = _MAPPABLE[rng.integers(len(_MAPPABLE))]
        subjects = [(attrs, value), ({}, topic)]
        if cat == "unqualified":
            subjects = [({}, value), ({}, topic)]
        elif cat == "unmapped":
            subjects = [({"subjectScheme": "local-tags"}, "misc"), ({}, topic)]
        elif cat == "linsearch":
            subjects = [({"subjectScheme": "linsearch(mapping rules)"}, "Geosciences"), (attrs, value)]
        elif cat == "short":
            title, desc, subjects = f"{topic.title()} data {site}", "", [(attrs, value)]
        elif cat == "non_english":
            title = f"Messdaten {topic.split()[0]} Standort {site}"
            desc = " ".join(_DE_SENTENCES[j] for j in rng.choice(len(_DE_SENTENCES), 2, replace=False))
            subjects = [(attrs, value)]
        elif cat == "duplicate":
            title, desc, subjects = originals[rng.integers(len(originals))]
        if cat == "mappable":
            originals.append((title, desc, subjects))
        descriptions = [desc] if desc else []
        out.append(_datacite_xml(ident, [title], descriptions, subjects, year))
        counts[cat] += 1
    return out, counts


def oai_page(records_xml: list[str], token: str | None = None, prefix: str = "oai_datacite") -> str:
    """Wrap record elements in an OAI-PMH ListRecords response."""
    tok = f"<resumptionToken>{token}</resumptionToken>" if token else "<resumptionToken/>"
    return (
        '<?xml version="1.0" encoding="UTF-8"?>'
        '<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">'
        "<responseDate>2020-01-01T00:00:00Z</responseDate>"
        f'<request verb="ListRecords" metadataPrefix="{prefix}">http://localhost/oai</request>'
        f"<ListRecords>{''.join(records_xml)}{tok}</ListRecords></OAI-PMH>"
    )
