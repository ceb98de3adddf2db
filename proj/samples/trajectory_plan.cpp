// Prints a reference-guided plan between two ring cameras as a cameras JSON.
#include "gsfix/io/cameras.hpp"
#include "gsfix/synthetic_job.hpp"

#include <iostream>

using namespace gsfix;

int main() {
    RingSceneOptions o;
    std::vector<CameraPose> ring;
    for (int deg : {0, 60, 120, 180}) {
        ring.push_back(ring_camera(o, deg, o.ring_height, "cam" + std::to_string(deg)));
    }
    const OrbitPath orbit = fit_orbit_path(ring);
    const TrajectoryPlan plan = sample_reference_guided(ring[0], ring[1], &orbit, 13, {2, 9, 2});
    json out = cameras_to_json(std::vector<CameraRecord>(plan.poses.begin(), plan.poses.end()));
    for (std::size_t i = 0; i < plan.size(); ++i) {
        out[i]["segment"] = to_string(plan.labels[i]);
    }
    std::cout << out.dump(1) << "\n";
}
