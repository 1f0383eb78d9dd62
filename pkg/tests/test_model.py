import json

import numpy as np
import pytest

from artikit.errors import ParseError, ValidationError
from artikit.model import (
    ROOT_ID,
    ArticulatedModel,
    JointLimits,
    JointSpec,
    JointType,
    KinematicTree,
    PartSpec,
    TriMesh,
    export_urdf,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    validate_model,
)
from tests.conftest import build_cabinet
from tests.oracles import check_urdf


def test_valid_cabinet_has_no_violations(cabinet):
    assert validate_model(cabinet) == []


def _with_parts(model, parts):
    return ArticulatedModel(model.points, parts, model.tree, model.base_indices)


class TestValidation:
    def test_cycle_detection(self, cabinet):
        broken = ArticulatedModel(
            cabinet.points, cabinet.parts, KinematicTree({0: 1, 1: 0}), cabinet.base_indices
        )
        violations = validate_model(broken)
        assert any("cycle {0, 1}" in v for v in violations)

    def test_zero_axis_revolute(self, cabinet):
        body, door = cabinet.parts
        bad_door = PartSpec(
            door.id, door.label, door.point_indices,
            JointSpec(JointType.REVOLUTE, [0, 0, 0], door.joint.pivot, door.joint.limits),
        )
        violations = validate_model(_with_parts(cabinet, (body, bad_door)))
        assert any("joint axis not unit length" in v for v in violations)

    def test_negative_span(self, cabinet):
        body, door = cabinet.parts
        bad = PartSpec(
            door.id, door.label, door.point_indices,
            JointSpec(JointType.REVOLUTE, door.joint.axis, door.joint.pivot, JointLimits(0.5, -0.1)),
        )
        violations = validate_model(_with_parts(cabinet, (body, bad)))
        assert any("span >= 0" in v for v in violations)

    def test_fixed_with_nonzero_limits(self, cabinet):
        body, door = cabinet.parts
        bad = PartSpec(
            body.id, body.label, body.point_indices,
            JointSpec(JointType.FIXED, body.joint.axis, body.joint.pivot, JointLimits(0.1, 0.0)),
        )
        violations = validate_model(_with_parts(cabinet, (bad, door)))
        assert any("fixed joint must have center = span = 0" in v for v in violations)

    def test_nonfinite_point(self, cabinet):
        pts = np.array(cabinet.points)
        pts[3, 1] = np.nan
        broken = ArticulatedModel(pts, cabinet.parts, cabinet.tree, cabinet.base_indices)
        assert any("not finite" in v for v in validate_model(broken))

    def test_empty_point_indices(self, cabinet):
        body, door = cabinet.parts
        bad = PartSpec(door.id, door.label, np.zeros(0, dtype=np.int64), door.joint)
        violations = validate_model(_with_parts(cabinet, (body, bad)))
        assert any("point_indices empty" in v for v in violations)
        assert any("not covered" in v for v in violations)

    def test_duplicate_point_indices(self, cabinet):
        body, door = cabinet.parts
        idx = np.array(door.point_indices)
        idx[0] = idx[1]
        bad = PartSpec(door.id, door.label, idx, door.joint)
        violations = validate_model(_with_parts(cabinet, (body, bad)))
        assert any("duplicates" in v for v in violations)

    def test_out_of_range_indices(self, cabinet):
        body, door = cabinet.parts
        idx = np.array(door.point_indices)
        idx[0] = cabinet.num_points + 7
        bad = PartSpec(door.id, door.label, idx, door.joint)
        violations = validate_model(_with_parts(cabinet, (body, bad)))
        assert any("out of range" in v for v in violations)

    def test_overlapping_parts(self, cabinet):
        body, door = cabinet.parts
        idx = np.array(door.point_indices)
        idx[0] = 0  # already owned by the body
        bad = PartSpec(door.id, door.label, idx, door.joint)
        violations = validate_model(_with_parts(cabinet, (body, bad)))
        assert any("assigned more than once" in v for v in violations)

    def test_tree_unknown_and_missing_parts(self, cabinet):
        broken = ArticulatedModel(
            cabinet.points, cabinet.parts, KinematicTree({0: ROOT_ID, 7: 0}), cabinet.base_indices
        )
        violations = validate_model(broken)
        assert any("missing part 1" in v for v in violations)
        assert any("unknown part id 7" in v for v in violations)

    def test_self_parent(self, cabinet):
        broken = ArticulatedModel(
            cabinet.points, cabinet.parts, KinematicTree({0: ROOT_ID, 1: 1}), cabinet.base_indices
        )
        assert any("own parent" in v for v in validate_model(broken))

    def test_mutating_one_field_at_a_time_always_caught(self, cabinet):
        """Each single-field corruption must produce at least one violation."""
        body, door = cabinet.parts
        mutations = [
            _with_parts(cabinet, (body, PartSpec(door.id, door.label, door.point_indices,
                JointSpec(JointType.PRISMATIC, [0.5, 0, 0], door.joint.pivot, door.joint.limits)))),
            _with_parts(cabinet, (body, PartSpec(door.id, door.label, door.point_indices,
                JointSpec(door.joint.jtype, door.joint.axis, [np.inf, 0, 0], door.joint.limits)))),
            ArticulatedModel(cabinet.points, cabinet.parts, KinematicTree({0: ROOT_ID, 1: 99}),
                             cabinet.base_indices),
            ArticulatedModel(cabinet.points, cabinet.parts, cabinet.tree, np.array([0])),
        ]
        for broken in mutations:
            assert validate_model(broken), "corrupted model incorrectly validated"


class TestJsonRoundTrip:
    def test_save_load_identity(self, cabinet, tmp_path):
        path = tmp_path / "cab.json"
        save_model(cabinet, path)
        assert load_model(path) == cabinet

    def test_dict_round_trip(self, cabinet):
        assert model_from_dict(model_to_dict(cabinet)) == cabinet

    def test_missing_field_named(self, cabinet, tmp_path):
        doc = model_to_dict(cabinet)
        del doc["parts"][0]["joint"]["span"]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="span"):
            load_model(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "trunc.json"
        path.write_text('{"points": [[0, 0, 0]], "base_indices"')
        with pytest.raises(ParseError):
            load_model(path)

    def test_unknown_key_rejected(self, cabinet, tmp_path):
        doc = model_to_dict(cabinet)
        doc["extra"] = 1
        path = tmp_path / "extra.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="extra"):
            load_model(path)

    def test_unknown_joint_key_rejected(self, cabinet, tmp_path):
        doc = model_to_dict(cabinet)
        doc["parts"][0]["joint"]["friction"] = 0.5
        path = tmp_path / "extra2.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError, match="friction"):
            load_model(path)

    def test_negative_span_rejected_on_load(self, cabinet, tmp_path):
        doc = model_to_dict(cabinet)
        doc["parts"][1]["joint"]["span"] = -0.1
        path = tmp_path / "span.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationError, match="span"):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError, match="not found"):
            load_model(tmp_path / "nope.json")


class TestUrdfExport:
    def test_counts(self, cabinet):
        doc = export_urdf(cabinet)
        assert doc.count("<joint ") == len(cabinet.parts)
        assert doc.count("<link ") == len(cabinet.parts) + 1

    def test_fixed_joint_has_no_limit(self, cabinet):
        doc = export_urdf(cabinet)
        fixed = doc.split('type="fixed"')[1].split("</joint>")[0]
        assert "<limit" not in fixed

    def test_revolute_limits_are_center_span(self):
        model = build_cabinet(door_limits=(0.5, 0.5))
        doc = export_urdf(model)
        assert 'lower="0"' in doc and 'upper="1"' in doc

    def test_origin_is_pivot_and_axis_matches(self, cabinet):
        doc = export_urdf(cabinet)
        assert 'xyz="0.2 -0.2 0"' in doc
        assert '<axis xyz="0 0 1"' in doc

    def test_grammar_validator_accepts(self, cabinet):
        assert check_urdf(export_urdf(cabinet)) == []

    def test_grammar_validator_rejects_broken(self, cabinet):
        doc = export_urdf(cabinet).replace('<limit lower="0" upper="1" effort="100" velocity="1" />', "")
        assert check_urdf(doc)

    def test_continuous_joint_type(self):
        model = build_cabinet()
        body, door = model.parts
        cont = PartSpec(
            door.id, door.label, door.point_indices,
            JointSpec(JointType.CONTINUOUS, door.joint.axis, door.joint.pivot, JointLimits()),
        )
        doc = export_urdf(ArticulatedModel(model.points, (body, cont), model.tree, model.base_indices))
        assert 'type="continuous"' in doc
        assert check_urdf(doc) == []

    def test_mesh_paths_emitted(self, cabinet):
        doc = export_urdf(cabinet, mesh_paths={0: "body.obj", 1: "door.obj", ROOT_ID: "base.obj"})
        assert doc.count('filename="door.obj"') == 2  # visual + collision
        assert check_urdf(doc) == []

    def test_invalid_model_raises(self, cabinet):
        broken = ArticulatedModel(
            cabinet.points, cabinet.parts, KinematicTree({0: 1, 1: 0}), cabinet.base_indices
        )
        with pytest.raises(ValidationError):
            export_urdf(broken)


class TestTypes:
    def test_limits_lower_upper(self):
        lim = JointLimits(center=0.5, span=0.25)
        assert lim.lower == 0.25 and lim.upper == 0.75

    def test_model_immutability(self, cabinet):
        with pytest.raises(ValueError):
            cabinet.points[0, 0] = 9.0
        with pytest.raises(ValueError):
            cabinet.parts[1].joint.axis[0] = 1.0

    def test_equality_is_field_for_field(self, cabinet):
        other = build_cabinet()
        assert other == cabinet
        shifted = ArticulatedModel(
            np.array(cabinet.points) + 1e-12, cabinet.parts, cabinet.tree, cabinet.base_indices
        )
        assert shifted != cabinet

    def test_trimesh_validation(self):
        degenerate = TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
        assert any("nonzero area" in v for v in degenerate.validate())
        out_of_range = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 5]])
        assert any("out of range" in v for v in out_of_range.validate())
        ok = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        assert ok.validate() == []
