import random

import pytest

from mmstack.device import DeviceProfile, fit, load_profile, resolve_profile
from mmstack.smil.tree import (
    Layout,
    Region,
    SmilTree,
    Unit,
    pct,
    px,
    validate,
)

from helpers import random_tree


def region_box(region):
    return (region.left.value, region.top.value,
            region.width.value, region.height.value)


def test_identity_when_already_fitting():
    tree = SmilTree(layout=Layout(160, 120, [
        Region("r", px(0), px(0), px(160), px(60)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 160, 120))
    assert region_box(fitted.layout.regions[0]) == (0, 0, 160, 60)
    assert (fitted.layout.root_width, fitted.layout.root_height) == (160, 120)


def test_downscale_worked_example():
    tree = SmilTree(layout=Layout(320, 240, [
        Region("r", px(0), px(0), px(320), px(120)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 160, 120))
    assert region_box(fitted.layout.regions[0]) == (0, 0, 160, 60)


def test_default_layout_installed_when_absent():
    fitted = fit(SmilTree(), DeviceProfile("d", 176, 208))
    boxes = {r.id: region_box(r) for r in fitted.layout.regions}
    assert boxes == {"Image": (0, 0, 176, 104), "Text": (0, 104, 176, 104)}


def test_percent_resolution_against_original_root():
    tree = SmilTree(layout=Layout(320, 240, [
        Region("r", px(0), px(0), pct(100), pct(50)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 160, 120))
    # 100% of 320 = 320 scaled by 0.5; 50% of 240 = 120 scaled by 0.5
    assert region_box(fitted.layout.regions[0]) == (0, 0, 160, 60)


def test_no_upscaling_for_small_roots():
    tree = SmilTree(layout=Layout(100, 100, [
        Region("r", px(10), px(10), px(50), px(50)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 640, 480))
    assert region_box(fitted.layout.regions[0]) == (10, 10, 50, 50)
    assert (fitted.layout.root_width, fitted.layout.root_height) == (640, 480)


def test_out_of_bounds_region_clamped():
    tree = SmilTree(layout=Layout(100, 100, [
        Region("r", px(300), px(10), px(50), px(50)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 176, 208))
    left, top, width, height = region_box(fitted.layout.regions[0])
    assert left + width <= 176
    assert top + height <= 208
    assert width >= 1 and height >= 1


def test_degenerate_size_floors_to_one_pixel():
    tree = SmilTree(layout=Layout(1000, 1000, [
        Region("r", px(0), px(0), px(1), px(1)),
    ]))
    fitted = fit(tree, DeviceProfile("d", 16, 16))
    assert region_box(fitted.layout.regions[0])[2:] == (1, 1)


def test_pars_carried_unchanged():
    from mmstack.smil.tree import MediaItem, MediaKind, Par

    tree = SmilTree(pars=[Par(dur_ms=1000, media=[
        MediaItem(MediaKind.TEXT, "x", "Text"),
    ])])
    fitted = fit(tree, DeviceProfile("d", 176, 208))
    assert fitted.pars == tree.pars
    assert validate(fitted) == []


def test_fit_does_not_mutate_input():
    tree = SmilTree(layout=Layout(320, 240, [
        Region("r", px(0), px(0), pct(100), pct(50)),
    ]))
    fit(tree, DeviceProfile("d", 160, 120))
    assert tree.layout.root_width == 320
    assert tree.layout.regions[0].width == pct(100)


def test_containment_pixels_and_idempotence_randomized():
    rng = random.Random(777)
    for _ in range(300):
        tree = random_tree(rng)
        device = DeviceProfile("d", rng.randint(16, 1024), rng.randint(16, 1024))
        fitted = fit(tree, device)
        assert validate(fitted) == []
        for region in fitted.layout.regions:
            left, top, width, height = region_box(region)
            assert region.left.unit is Unit.PIXELS
            assert region.width.unit is Unit.PIXELS
            assert 0 <= left and 0 <= top
            assert left + width <= device.screen_width
            assert top + height <= device.screen_height
        assert fit(fitted, device) == fitted


def test_aspect_preserved_within_rounding():
    rng = random.Random(4242)
    for _ in range(100):
        width = rng.randint(200, 1000)
        height = rng.randint(200, 1000)
        tree = SmilTree(layout=Layout(1024, 1024, [
            Region("r", px(0), px(0), px(width), px(height)),
        ]))
        device = DeviceProfile("d", rng.randint(64, 512), rng.randint(64, 512))
        fitted = fit(tree, device)
        scale = min(device.screen_width / 1024, device.screen_height / 1024)
        got = region_box(fitted.layout.regions[0])
        assert abs(got[2] - width * scale) <= 1
        assert abs(got[3] - height * scale) <= 1


def test_profile_loading(tmp_path, fixtures_dir):
    profile = load_profile(f"{fixtures_dir}/device_qqvga.json")
    assert (profile.screen_width, profile.screen_height) == (160, 120)
    assert resolve_profile(None).name == "default"
    assert resolve_profile("qvga").screen_width == 320
    assert resolve_profile(f"{fixtures_dir}/device_qqvga.json").name == "qqvga"


def test_profile_minimum_size():
    with pytest.raises(ValueError):
        DeviceProfile("tiny", 8, 8)
