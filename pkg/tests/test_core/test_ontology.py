import numpy as np
import pytest

from core.errors import UnknownClassIndexError
from core.ontology import IGNORE, ONTOLOGY, ClassOntology

EVAL_CLASSES = (
    "bush",
    "dirt",
    "fence",
    "grass",
    "gravel",
    "log",
    "mud",
    "other-object",
    "other-terrain",
    "rock",
    "sky",
    "structure",
    "tree-foliage",
    "tree-trunk",
    "water",
)


class TestOntology:
    def test_eval_classes(self):
        assert ONTOLOGY.eval2d == EVAL_CLASSES
        assert ONTOLOGY.num_classes == 15

    def test_eval3d_keeps_indices(self):
        assert "sky" not in ONTOLOGY.eval3d
        assert len(ONTOLOGY.eval3d) == 12
        assert ONTOLOGY.eval3d_indices.tolist() == [0, 1, 2, 3, 4, 5, 6, 7, 9, 11, 12, 13]

    def test_index(self):
        assert ONTOLOGY.index("bush") == 0
        assert ONTOLOGY.index("tree-trunk") == 13
        assert ONTOLOGY.index("pole") == ONTOLOGY.index("other-object")
        assert ONTOLOGY.indices(["sky", "water"]) == [10, 14]

    @pytest.mark.parametrize("name", ["vehicle", "car", ""])
    def test_index_unknown(self, name):
        with pytest.raises(UnknownClassIndexError):
            ONTOLOGY.index(name)

    def test_merge_raw(self):
        raw = [
            ONTOLOGY.raw_classes.index("pole"),
            ONTOLOGY.raw_classes.index("asphalt"),
            ONTOLOGY.raw_classes.index("vehicle"),
            ONTOLOGY.raw_classes.index("tree-trunk"),
        ]
        assert ONTOLOGY.merge_raw(np.array(raw)).tolist() == [7, 8, IGNORE, 13]

    def test_merge_raw_unknown(self):
        with pytest.raises(UnknownClassIndexError) as e:
            ONTOLOGY.merge_raw(np.array([1, 18, 18, 40]))

        assert e.value.values == {18: 2, 40: 1}

    def test_to_raw(self):
        indices = np.arange(ONTOLOGY.num_classes)
        raw = ONTOLOGY.to_raw(indices)

        assert ONTOLOGY.merge_raw(raw).tolist() == indices.tolist()

    def test_to_raw_rejects_ignore(self):
        with pytest.raises(UnknownClassIndexError):
            ONTOLOGY.to_raw(np.array([0, IGNORE]))

    def test_validate(self):
        assert ONTOLOGY.validate(np.array([0, 14, IGNORE])).tolist() == [0, 14, IGNORE]

        with pytest.raises(UnknownClassIndexError):
            ONTOLOGY.validate(np.array([15]))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"raw_classes": ("a", "a")},
            {"merge_map": {"unknown": "bush"}},
            {"excluded_3d": frozenset({"vehicle"})},
        ],
    )
    def test_invalid_ontology(self, kwargs):
        with pytest.raises(ValueError):
            ClassOntology(**kwargs)
