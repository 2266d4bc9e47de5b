import math

import pytest
import torch

from pinet.models.params import HyperParams
from pinet.services.losses import (
    attention_maps,
    distillation_loss,
    exist_loss,
    feature_loss,
    non_exist_loss,
    offset_loss,
    spatial_softmax,
    total_loss,
)
from pinet.services.network import ModuleOutput, ModuleOutputs
from pinet.utils.errors import ShapeMismatchError


def _grids(shape=(1, 32, 64), dtype=torch.float32):
    return torch.zeros(shape, dtype=dtype)


def test_exist_single_cell():
    exist = _grids()
    exist[0, 3, 5] = 1.0
    conf = _grids((1, 1, 32, 64))
    conf[0, 0, 3, 5] = 0.5

    assert exist_loss(conf, exist).item() == pytest.approx(0.25)


def test_exist_without_keypoints_is_zero():
    assert exist_loss(torch.rand(2, 1, 32, 64), _grids((2, 32, 64))).tolist() == [0.0, 0.0]


def test_non_exist_single_background_cell():
    exist = _grids()
    exist[0, 0, 0] = 1.0
    conf = _grids((1, 1, 32, 64))
    conf[0, 0, 10, 10] = 0.5

    expected = 0.25 / 2047 + 1e-5 * 0.25
    assert non_exist_loss(conf, exist).item() == pytest.approx(expected, rel=1e-5)
    assert expected == pytest.approx(1.246e-4, rel=1e-3)


def test_non_exist_below_floor_only_regularized():
    conf = _grids((1, 1, 32, 64))
    conf[0, 0, 4, 4] = 0.005

    assert non_exist_loss(conf, _grids()).item() == pytest.approx(1e-5 * 0.005 ** 2, rel=1e-4)


def test_offset_single_cell():
    exist = _grids()
    exist[0, 2, 2] = 1.0
    gx, gy = _grids(), _grids()
    gx[0, 2, 2] = 0.5
    gy[0, 2, 2] = 0.5
    offset = torch.zeros(1, 2, 32, 64)
    offset[0, 0, 2, 2] = 0.25
    offset[0, 1, 2, 2] = 0.75

    assert offset_loss(offset, gx, gy, exist).item() == pytest.approx(0.125)


def test_offset_background_gets_no_gradient():
    exist = _grids()
    exist[0, 2, 2] = 1.0
    offset = torch.rand(1, 2, 32, 64, requires_grad=True)

    offset_loss(offset, _grids(), _grids(), exist).sum().backward()

    grad = offset.grad.clone()
    grad[:, :, 2, 2] = 0.0
    assert torch.count_nonzero(grad) == 0
    assert torch.count_nonzero(offset.grad[:, :, 2, 2]) == 2


def test_feature_same_instance_pair():
    instance = torch.zeros(1, 32, 64, dtype=torch.long)
    instance[0, 0, 0] = 1
    instance[0, 0, 1] = 1
    embedding = torch.zeros(1, 4, 32, 64)
    embedding[0, 0, 0, 1] = 1.0

    assert feature_loss(embedding, instance).item() == pytest.approx(0.5, abs=1e-5)


def test_feature_identical_same_instance_embeddings_cost_exactly_zero():
    instance = torch.zeros(1, 32, 64, dtype=torch.long)
    instance[0, 3, :10] = 1
    embedding = torch.zeros(1, 4, 32, 64)
    embedding[0, :, 3, :10] = 0.7
    embedding.requires_grad_(True)

    loss = feature_loss(embedding, instance)
    loss.sum().backward()

    assert loss.item() == 0.0
    assert torch.isfinite(embedding.grad).all()
    assert torch.count_nonzero(embedding.grad) == 0


def test_feature_far_apart_instances_cost_nothing():
    instance = torch.zeros(1, 32, 64, dtype=torch.long)
    instance[0, 0, 0] = 1
    instance[0, 5, 5] = 2
    embedding = torch.zeros(1, 4, 32, 64)
    embedding[0, 0, 5, 5] = 3.0

    assert feature_loss(embedding, instance).item() == pytest.approx(0.0, abs=1e-5)


def test_feature_close_instances_pay_margin():
    instance = torch.zeros(1, 32, 64, dtype=torch.long)
    instance[0, 0, 0] = 1
    instance[0, 5, 5] = 2
    embedding = torch.zeros(1, 4, 32, 64)
    embedding[0, 0, 5, 5] = 0.25

    # dois pares ordenados com (1 - 0.25), divididos por 4
    assert feature_loss(embedding, instance).item() == pytest.approx(0.375, abs=1e-5)


def test_feature_loss_ignores_instance_numbering():
    generator = torch.Generator().manual_seed(0)
    instance = torch.randint(0, 4, (1, 8, 16), generator=generator)
    relabeled = instance.clone()
    relabeled[instance == 1] = 3
    relabeled[instance == 3] = 1
    embedding = torch.randn(1, 4, 8, 16, generator=generator)

    assert feature_loss(embedding, instance).item() == pytest.approx(feature_loss(embedding, relabeled).item())


def test_shape_mismatch_is_rejected():
    with pytest.raises(ShapeMismatchError):
        exist_loss(torch.zeros(1, 1, 16, 64), _grids())


def test_distillation_single_module_is_zero():
    activation = torch.randn(3, 8, 2, 4)

    assert distillation_loss([activation]).tolist() == [0.0, 0.0, 0.0]


def test_distillation_identical_maps_is_zero():
    activation = torch.randn(2, 8, 2, 4)

    assert distillation_loss([activation, activation.clone()]).tolist() == [0.0, 0.0]


def test_distillation_hand_computed():
    delta = 2.0
    student = torch.zeros(1, 1, 2, 4)
    teacher = torch.zeros(1, 1, 2, 4)
    teacher[0, 0, 0, 0] = math.sqrt(delta)

    z = math.exp(delta) + 7
    expected = (math.exp(delta) / z - 1 / 8) ** 2 + 7 * (1 / z - 1 / 8) ** 2
    assert distillation_loss([student, teacher]).item() == pytest.approx(expected, rel=1e-5)


def test_distillation_sums_over_students():
    student = torch.zeros(1, 1, 2, 4)
    teacher = torch.zeros(1, 1, 2, 4)
    teacher[0, 0, 1, 2] = 1.0

    single = distillation_loss([student, teacher]).item()

    assert distillation_loss([student, student.clone(), teacher]).item() == pytest.approx(2 * single)


def test_softmax_ignores_constant_shift():
    energy = torch.randn(2, 8)

    assert torch.allclose(spatial_softmax(energy), spatial_softmax(energy + 5.0), atol=1e-6)


def test_attention_maps_sum_to_one():
    for attention in attention_maps([torch.randn(2, 16, 2, 4)]):
        assert torch.allclose(attention.sum(dim=1), torch.ones(2))


def test_teacher_is_detached_by_default():
    student = torch.randn(1, 4, 2, 4, requires_grad=True)
    teacher = torch.randn(1, 4, 2, 4, requires_grad=True)

    distillation_loss([student, teacher]).sum().backward()

    assert teacher.grad is None
    assert student.grad is not None


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    generator = torch.Generator().manual_seed(seed)
    shape = (1, 8, 16)
    exist = (torch.rand(shape, generator=generator, dtype=torch.float64) > 0.7).double()
    instance = (exist * torch.randint(1, 4, shape, generator=generator)).long()
    conf = (0.02 + 0.96 * torch.rand((1, 1) + shape[1:], generator=generator, dtype=torch.float64)).requires_grad_()
    offset = torch.rand((1, 2) + shape[1:], generator=generator, dtype=torch.float64, requires_grad=True)
    embedding = (0.5 * torch.randn((1, 4) + shape[1:], generator=generator, dtype=torch.float64)).requires_grad_()
    gx = torch.rand(shape, generator=generator, dtype=torch.float64)
    gy = torch.rand(shape, generator=generator, dtype=torch.float64)
    activations = [
        torch.randn(1, 3, 2, 4, generator=generator, dtype=torch.float64, requires_grad=True) for _ in range(3)
    ]

    assert torch.autograd.gradcheck(lambda c: exist_loss(c, exist), (conf,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda c: non_exist_loss(c, exist), (conf,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda o: offset_loss(o, gx, gy, exist), (offset,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda e: feature_loss(e, instance), (embedding,), rtol=1e-4)
    assert torch.autograd.gradcheck(
        lambda *a: distillation_loss(list(a), detach_teacher=False), tuple(activations), rtol=1e-4
    )


def test_gradients_match_finite_differences_on_full_grid():
    """Grade 32x64 completa; as 20 sementes acima usam 8x16 pelo tempo de execução"""
    generator = torch.Generator().manual_seed(99)
    shape = (1, 32, 64)
    exist = (torch.rand(shape, generator=generator, dtype=torch.float64) > 0.97).double()
    instance = (exist * torch.randint(1, 4, shape, generator=generator)).long()
    conf = (0.02 + 0.96 * torch.rand((1, 1) + shape[1:], generator=generator, dtype=torch.float64)).requires_grad_()
    offset = torch.rand((1, 2) + shape[1:], generator=generator, dtype=torch.float64, requires_grad=True)
    embedding = (0.5 * torch.randn((1, 2) + shape[1:], generator=generator, dtype=torch.float64)).requires_grad_()
    gx = torch.rand(shape, generator=generator, dtype=torch.float64)
    gy = torch.rand(shape, generator=generator, dtype=torch.float64)

    assert torch.autograd.gradcheck(lambda c: exist_loss(c, exist), (conf,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda c: non_exist_loss(c, exist), (conf,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda o: offset_loss(o, gx, gy, exist), (offset,), rtol=1e-4)
    assert torch.autograd.gradcheck(lambda e: feature_loss(e, instance), (embedding,), rtol=1e-4)


def _targets(lanes_cells):
    exist = torch.zeros(1, 32, 64)
    instance = torch.zeros(1, 32, 64, dtype=torch.long)
    for lane_id, cells in enumerate(lanes_cells, start=1):
        for row, col in cells:
            exist[0, row, col] = 1.0
            instance[0, row, col] = lane_id
    offset_x = torch.full((1, 32, 64), 0.5) * exist
    offset_y = torch.full((1, 32, 64), 0.25) * exist
    return {"exist": exist, "offset_x": offset_x, "offset_y": offset_y, "instance": instance}


def _module(targets, activation):
    return ModuleOutput(
        confidence=targets["exist"][:, None].clone(),
        offset=torch.stack([targets["offset_x"], targets["offset_y"]], dim=1),
        embedding=torch.zeros(1, 4, 32, 64),
        activation=activation,
    )


def test_perfect_prediction_has_zero_loss():
    targets = _targets([[(5, 5), (6, 6), (7, 7)]])
    activation = torch.randn(1, 8, 2, 4)
    outputs = ModuleOutputs([_module(targets, activation), _module(targets, activation.clone())])

    result = total_loss(outputs, targets, HyperParams())

    assert result.total.item() == pytest.approx(0.0, abs=1e-5)
    assert result.breakdown.total == pytest.approx(0.0, abs=1e-5)


def test_zero_weights_give_zero_total():
    targets = _targets([[(5, 5), (6, 6)], [(5, 40), (6, 40)]])
    outputs = ModuleOutputs([
        ModuleOutput(torch.rand(1, 1, 32, 64), torch.rand(1, 2, 32, 64), torch.randn(1, 4, 32, 64), torch.randn(1, 8, 2, 4))
        for _ in range(2)
    ])
    hp = HyperParams(gamma_e=0, gamma_n=0, gamma_o=0, gamma_f=0, gamma_d=0)

    assert total_loss(outputs, targets, hp).total.item() == 0.0


def test_total_is_weighted_sum_over_modules():
    targets = _targets([[(5, 5), (6, 6)], [(5, 40), (6, 40)]])
    generator = torch.Generator().manual_seed(3)
    modules = [
        ModuleOutput(
            torch.rand(1, 1, 32, 64, generator=generator),
            torch.rand(1, 2, 32, 64, generator=generator),
            torch.randn(1, 4, 32, 64, generator=generator),
            torch.randn(1, 8, 2, 4, generator=generator),
        )
        for _ in range(2)
    ]
    hp = HyperParams()

    result = total_loss(ModuleOutputs(modules), targets, hp)

    expected = 0.0
    for m in modules:
        expected += hp.gamma_e * exist_loss(m.confidence, targets["exist"]).item()
        expected += hp.gamma_n * non_exist_loss(m.confidence, targets["exist"]).item()
        expected += hp.gamma_o * offset_loss(m.offset, targets["offset_x"], targets["offset_y"], targets["exist"]).item()
        expected += hp.gamma_f * feature_loss(m.embedding, targets["instance"]).item()
    expected += hp.gamma_d * distillation_loss([m.activation for m in modules]).item()
    assert result.total.item() == pytest.approx(expected, rel=1e-5)
    assert result.per_sample.shape == (1,)


def test_non_finite_total_is_reported_not_raised():
    targets = _targets([[(5, 5), (6, 6)]])
    confidence = torch.full((1, 1, 32, 64), float("nan"))
    outputs = ModuleOutputs([ModuleOutput(confidence, torch.rand(1, 2, 32, 64), torch.zeros(1, 4, 32, 64), torch.zeros(1, 8, 2, 4))])

    result = total_loss(outputs, targets, HyperParams())

    assert not torch.isfinite(result.total)
    assert math.isnan(result.breakdown.total)
