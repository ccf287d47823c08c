import pytest

from densepred.errors import NotRegisteredError
from densepred.registry import Registry
from densepred.tasks import TASKS, preset_for
from densepred.project_types import Task


class TestRegistry:
    """Test suite for the named Registry."""

    def test_add_and_resolve(self):
        # Arrange
        registry = Registry("numbers")

        # Act
        registry.add("one", value=1, kind="int")

        # Assert
        assert registry.resolve("one") == 1
        assert registry.metadata("one") == {"kind": "int"}
        assert "one" in registry
        assert registry.names() == ["one"]

    def test_overwrite_warns(self):
        # Arrange
        registry = Registry("dupes")
        registry.add("a", value=1)

        # Act / Assert
        with pytest.warns(UserWarning, match="already registered"):
            registry.add("a", value=2)
        assert registry.resolve("a") == 2

    def test_missing_name(self):
        """The error names both the key and the registry."""
        # Arrange
        registry = Registry("colors").add("red", value="#f00")

        # Act / Assert
        with pytest.raises(NotRegisteredError) as excinfo:
            registry.resolve("blue")
        assert excinfo.value.name == "blue"
        assert excinfo.value.registry == "colors"
        assert "red" in str(excinfo.value)

    def test_child_is_isolated(self):
        """Entries added to a child never leak into the parent."""
        # Arrange
        parent = Registry("parent").add("a", value=1)

        # Act
        child = parent.child()
        child.add("b", value=2)

        # Assert
        assert child.names() == ["a", "b"]
        assert parent.names() == ["a"]


class TestTaskPresets:
    """Tests for the per-task hyperparameter presets."""

    def test_every_task_has_a_preset(self):
        assert TASKS.names() == ["depth", "normals", "semantic", "depth+normals"]
        for task in Task:
            assert preset_for(task).task is task

    def test_preset_values(self):
        # Act
        depth = preset_for("depth")
        normals = preset_for("normals")
        semantic = preset_for("semantic")

        # Assert
        assert (depth.lr_16, depth.lr_17, depth.dropout_16) == (0.1, 0.1, 0.5)
        assert normals.base_lr_scale == 10.0
        assert (semantic.lr_16, semantic.lr_17, semantic.dropout_16) == (1.0, 0.01, 0.8)

    def test_unknown_task_spelling(self):
        with pytest.raises(ValueError):
            preset_for("albedo")
