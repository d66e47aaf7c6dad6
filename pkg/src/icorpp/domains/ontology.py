"""Item ontology and the closeness functions used to grade wrong deliveries."""
from __future__ import annotations

DEFAULT_TREE = {
    "item": {
        "drink": {"coffee": {"regular": {}, "decaf": {}}, "soda": {}, "juice": {}},
        "food": {"sandwich": {}, "cookie": {}},
    }
}


class Ontology:
    """A rooted class tree whose leaves are items."""

    def __init__(self, tree=None):
        tree = DEFAULT_TREE if tree is None else tree
        if len(tree) != 1:
            raise ValueError("ontology needs exactly one root")
        self.root = next(iter(tree))
        self.parent = {self.root: None}
        self.children = {}
        self._add(self.root, tree[self.root])

    def _add(self, node, sub):
        self.children[node] = list(sub)
        for child, grand in sub.items():
            if child in self.parent:
                raise ValueError(f"{child} appears twice in the ontology")
            self.parent[child] = node
            self._add(child, grand)

    @property
    def leaves(self) -> list:
        return [n for n, kids in self.children.items() if not kids]

    @property
    def classes(self) -> list:
        return [n for n, kids in self.children.items() if kids]

    def path(self, node) -> list:
        """Nodes from the root down to ``node``."""
        if node not in self.parent:
            raise KeyError(f"unknown ontology node {node!r}")
        out = []
        while node is not None:
            out.append(node)
            node = self.parent[node]
        return out[::-1]

    def lca(self, a, b):
        pa, pb = self.path(a), self.path(b)
        anc = None
        for x, y in zip(pa, pb):
            if x != y:
                break
            anc = x
        return anc

    def dep(self, ancestor, node) -> int:
        """Number of nodes on the path from ``ancestor`` to ``node``, both included."""
        p = self.path(node)
        if ancestor not in p:
            raise ValueError(f"{ancestor} is not an ancestor of {node}")
        return len(p) - p.index(ancestor)

    def ancestors(self, node) -> list:
        return self.path(node)[:-1]

    def restricted(self, items) -> "Ontology":
        """The sub-tree spanned by ``items`` (classes without kept leaves are dropped)."""
        keep = set()
        for it in items:
            if it not in self.parent or self.children[it]:
                raise KeyError(f"{it!r} is not an item of the ontology")
            keep.update(self.path(it))

        def sub(node):
            return {c: sub(c) for c in self.children[node] if c in keep}
        return Ontology({self.root: sub(self.root)})


def item_closeness(ontology: Ontology, i1, i2) -> float:
    """1 - (max(dep(LCA,i1), dep(LCA,i2)) - 1) / max(dep(root,i1), dep(root,i2))."""
    for it in (i1, i2):
        if it not in ontology.parent or ontology.children[it]:
            raise KeyError(f"unknown item {it!r}")
    anc = ontology.lca(i1, i2)
    num = max(ontology.dep(anc, i1), ontology.dep(anc, i2)) - 1
    den = max(ontology.dep(ontology.root, i1), ontology.dep(ontology.root, i2))
    return 1.0 - num / den


def room_closeness(distances, r1, r2) -> float:
    """dis(shop,r2) / (2 dis(shop,r1) + dis(shop,r2)); note the asymmetry."""
    d1, d2 = distances[r1], distances[r2]
    if d1 <= 0 or d2 <= 0:
        raise ValueError("room distances must be positive")
    return d2 / (2.0 * d1 + d2)
