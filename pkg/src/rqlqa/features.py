"""Sparse per-token feature extraction for the sequence labeler.

Templates: lexical shape, POS/NER, WH-target type indicators, dependency and
adjacency based attribute indicators, descriptive adjective-noun pairs,
word-cluster ids, and in-post frequency buckets.  Feature strings map to
integer ids through a dictionary that is grown during fitting and frozen
afterwards; unknown features in frozen mode are silently dropped.
"""

from __future__ import annotations

from collections import Counter

from .corpus import Question

WH_WORDS = {"what", "where", "which"}

# Verbs that commonly introduce the thing being asked for.
SEEK_VERBS = {
    "look", "looking", "find", "recommend", "suggest", "want", "need",
    "seek", "stay", "visit", "suggestion", "recommendation",
}

_NOUN_TAGS = ("NN", "NNS", "NNP", "NNPS")
_ADJ_TAGS = ("JJ", "JJR", "JJS")


def _is_noun(pos: str) -> bool:
    return pos.startswith("NN") or pos == "NOUN"


def _is_adj(pos: str) -> bool:
    return pos.startswith("JJ") or pos == "ADJ"


class FeatureExtractor:
    """Maps each token of a question to a sparse set of feature indices."""

    def __init__(self):
        self.feature_ids: dict[str, int] = {}
        self.frozen = False

    @property
    def num_features(self) -> int:
        return len(self.feature_ids)

    def freeze(self):
        self.frozen = True

    def _lookup(self, name: str) -> int | None:
        idx = self.feature_ids.get(name)
        if idx is None and not self.frozen:
            idx = len(self.feature_ids)
            self.feature_ids[name] = idx
        return idx

    def token_features(self, question: Question) -> list[list[str]]:
        """Raw feature strings per token, independent of the dictionary."""
        tokens = question.tokens
        counts = Counter(tok.lemma.lower() for tok in tokens)
        potential_type = self._potential_type_positions(question)

        feats: list[list[str]] = []
        for i, tok in enumerate(tokens):
            low = tok.text.lower()
            fs = [
                "bias",
                f"w={low}",
                f"lemma={tok.lemma.lower()}",
                f"pos={tok.pos}",
                f"ner={tok.ner}",
                f"cluster={tok.cluster}",
                f"freq={min(counts[tok.lemma.lower()], 5)}",
            ]
            if tok.text[:1].isupper():
                fs.append("cap")
            if tok.text.isupper() and len(tok.text) > 1:
                fs.append("allcap")
            if any(c.isdigit() for c in tok.text):
                fs.append("hasdigit")
            if i > 0:
                fs.append(f"w-1={tokens[i - 1].text.lower()}")
                fs.append(f"pos-1={tokens[i - 1].pos}")
            else:
                fs.append("BOS")
            if i + 1 < len(tokens):
                fs.append(f"w+1={tokens[i + 1].text.lower()}")
                fs.append(f"pos+1={tokens[i + 1].pos}")
            else:
                fs.append("EOS")

            if i in potential_type:
                fs.append("potential-type")
            # Descriptive phrase: an adjective immediately preceding a noun.
            if _is_adj(tok.pos) and i + 1 < len(tokens) and _is_noun(tokens[i + 1].pos):
                fs.append("descriptive-adj")
            if _is_noun(tok.pos) and i > 0 and _is_adj(tokens[i - 1].pos):
                fs.append("described-noun")
            # Attribute hint: noun/adjective whose dependency ancestor is a
            # potential type.
            if (_is_noun(tok.pos) or _is_adj(tok.pos)) and self._ancestor_in(
                question, i, potential_type
            ):
                fs.append("attr-of-type")
            feats.append(fs)
        return feats

    def extract(self, question: Question) -> list[list[int]]:
        """Feature index sets per token; grows the dictionary unless frozen."""
        out = []
        for fs in self.token_features(question):
            idxs = []
            for name in fs:
                idx = self._lookup(name)
                if idx is not None:
                    idxs.append(idx)
            out.append(sorted(set(idxs)))
        return out

    def _potential_type_positions(self, question: Question) -> set[int]:
        """Nouns that look like the asked-for type: WH-word or seek-verb
        targets within the same sentence."""
        tokens = question.tokens
        positions: set[int] = set()
        for i, tok in enumerate(tokens):
            low = tok.lemma.lower()
            if low in WH_WORDS or low in SEEK_VERBS:
                for j in range(i + 1, min(i + 6, len(tokens))):
                    if tokens[j].sent != tok.sent:
                        break
                    if _is_noun(tokens[j].pos):
                        positions.add(j)
                        break
        return positions

    def _ancestor_in(self, question: Question, i: int, targets: set[int]) -> bool:
        seen = set()
        node = question.tokens[i].dep_head
        while node is not None and node not in seen and 0 <= node < len(question.tokens):
            if node in targets:
                return True
            seen.add(node)
            node = question.tokens[node].dep_head
        # Without a dependency parse, fall back to same-sentence adjacency.
        if question.tokens[i].dep_head is None:
            sent = question.tokens[i].sent
            return any(question.tokens[t].sent == sent for t in targets)
        return False
