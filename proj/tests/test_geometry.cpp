// Copyright Contributors to the depthconv project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "depthconv/geometry.hpp"

#include <random>

using namespace depthconv;

TEST_CASE("pinhole projection") {
    const CameraIntrinsics cam{100.0, 0.0, 0.0};
    const Eigen::Vector3d uvd = project_point(Eigen::Vector3d(1.0, 2.0, 2.0), cam);
    CHECK(uvd.x() == doctest::Approx(50.0));
    CHECK(uvd.y() == doctest::Approx(100.0));
    CHECK(uvd.z() == 2.0);
    CHECK_THROWS_AS(project_point(Eigen::Vector3d(1.0, 1.0, 0.0), cam), GeometryError);
    CHECK_THROWS_AS(project_point(Eigen::Vector3d(1.0, 1.0, -1.0), cam), GeometryError);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> xy(-5.0, 5.0), z(0.2, 20.0);
    const CameraIntrinsics cam2{525.0, 319.5, 239.5};
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector3d p(xy(rng), xy(rng), z(rng));
        const Eigen::Vector3d back = back_project(project_point(p, cam2), cam2);
        CHECK((back - p).cwiseAbs().maxCoeff() <= 1e-12);
    }
    // float instantiation
    const Eigen::Vector3f pf = project_point(Eigen::Vector3f(1.0f, 2.0f, 2.0f), cam);
    CHECK(pf.x() == doctest::Approx(50.0f));
}

TEST_CASE("receptive radius") {
    CHECK(receptive_radius(4.0, 2.0, 1.0) == doctest::Approx(0.5));
    CHECK(receptive_radius(2.0, 2.0, 1.0) == 1.0);
    CHECK(receptive_radius(0.1, 2.0, 1.0) == 8.0);    // clamped from 20
    CHECK(receptive_radius(100.0, 2.0, 1.0) == 0.25);  // clamped from 0.02
    CHECK(receptive_radius(0.0, 2.0, 1.5) == 1.5);    // hole keeps r0
    CHECK_THROWS_AS(receptive_radius(1.0, 0.0, 1.0), GeometryError);
    double prev = 1e9;
    for (double d = 0.5; d < 10.0; d += 0.25) {
        const double r = receptive_radius(d, 2.0, 1.0);
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("neighbourhood bounds and depth interval") {
    const CameraIntrinsics cam{100.0, 0.0, 0.0};
    const auto box = neighborhood_bounds_2d(40.0, 30.0, 3.0, 0.3, cam);
    CHECK(box.half_width == doctest::Approx(10.0));
    CHECK(box.u_lo == doctest::Approx(30.0));
    CHECK(box.u_hi == doctest::Approx(50.0));
    CHECK(box.v_lo == doctest::Approx(20.0));
    CHECK(box.v_hi == doctest::Approx(40.0));
    // Half-width halves when depth doubles.
    CHECK(neighborhood_bounds_2d(0, 0, 6.0, 0.3, cam).half_width == doctest::Approx(5.0));
    CHECK_THROWS_AS(neighborhood_bounds_2d(0, 0, 0.0, 0.3, cam), GeometryError);

    const auto iv = depth_interval(3.0, 0.3);
    CHECK(iv[0] == doctest::Approx(2.7));
    CHECK(iv[1] == doctest::Approx(3.3));
    CHECK_THROWS_AS(depth_interval(3.0, -0.1), GeometryError);
}

TEST_CASE("sigma schedule") {
    SigmaSchedule s{0.3, {1, 2, 4}};
    s.validate();
    CHECK(s.sigma(0) == doctest::Approx(0.3));
    CHECK(s.sigma(2) == doctest::Approx(1.2));
    CHECK(sigma_for_layer(s, 4.0) == doctest::Approx(1.2));
    CHECK_THROWS_AS((SigmaSchedule{0.3, {2, 1}}.validate()), GeometryError);
    CHECK_THROWS_AS((SigmaSchedule{0.0, {1}}.validate()), GeometryError);
    CHECK_THROWS_AS(sigma_for_layer(s, 0.5), GeometryError);
}

TEST_CASE("depth downsampling and median") {
    DepthMap d(2, 4, 0.0);
    d.values << 1, 3, 0, 0, 5, 7, 0, 2;
    const auto h = downsample_depth(d);
    REQUIRE(h.height() == 1);
    REQUIRE(h.width() == 2);
    CHECK(h.values(0, 0) == 4.0);
    CHECK(h.values(0, 1) == 2.0);  // holes ignored

    DepthMap all_holes(2, 2, 0.0);
    CHECK(downsample_depth(all_holes).values(0, 0) == 0.0);
    CHECK_THROWS_AS(downsample_depth(DepthMap(3, 2, 1.0)), GeometryError);

    std::vector<DepthMap> maps{d};
    CHECK(median_valid_depth(maps) == 3.0);  // {1,2,3,5,7}
    maps.push_back(DepthMap(1, 1, 4.0));
    CHECK(median_valid_depth(maps) == 3.0);  // lower median of {1,2,3,4,5,7}
    std::vector<DepthMap> empty{all_holes};
    CHECK_THROWS_AS(median_valid_depth(empty), GeometryError);
}
