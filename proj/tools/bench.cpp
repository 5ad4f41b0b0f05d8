// Compares the serial reference kernels against the OpenMP paths and checks
// that both produce identical bytes.

#include <chrono>
#include <cstdio>
#include <vector>

#include "sgg/obb.hpp"
#include "sgg/parallel.hpp"
#include "sgg/ppg.hpp"
#include "sgg/rng.hpp"

using namespace sgg;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<geom::OrientedBox> random_boxes(int n, Rng& rng) {
  std::vector<geom::OrientedBox> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    out.push_back(geom::OrientedBox::from_center(rng.uniform(0, 1000), rng.uniform(0, 1000),
                                                 rng.uniform(5, 80), rng.uniform(5, 80),
                                                 rng.uniform(-1.5, 1.5)));
  return out;
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", max_threads());
  Rng rng(99);

  {
    std::vector<geom::OrientedBox> a = random_boxes(400, rng);
    std::vector<geom::OrientedBox> b = random_boxes(400, rng);
    Mat serial, parallel;
    double ts = time_best_of(3, [&] { serial = geom::iou_matrix(a, b, Exec::serial); });
    double tp = time_best_of(3, [&] { parallel = geom::iou_matrix(a, b, Exec::parallel); });
    bool same = serial.v == parallel.v;
    std::printf("iou_matrix 400x400       serial %8.2f ms   openmp %8.2f ms   speedup %5.2fx   identical: %s\n",
                ts, tp, ts / tp, same ? "yes" : "NO");
  }

  {
    int dim = 137;
    Rng mrng(7);
    ppg::PpgModel model = ppg::PpgModel::init(dim, dim / 4, 64, mrng);
    std::vector<std::pair<ppg::PairKey, ppg::PairFeatureX>> cands;
    for (int i = 0; i < 20000; ++i) {
      ppg::PairFeatureX x;
      x.v.resize(static_cast<size_t>(dim));
      for (double& v : x.v) v = rng.normal();
      cands.push_back({{i, i + 1}, std::move(x)});
    }
    std::vector<ppg::PairScore> serial, parallel;
    double ts = time_best_of(3, [&] { serial = ppg::score_pairs(model, cands, Exec::serial); });
    double tp = time_best_of(3, [&] { parallel = ppg::score_pairs(model, cands, Exec::parallel); });
    bool same = serial.size() == parallel.size();
    for (size_t i = 0; same && i < serial.size(); ++i)
      same = serial[i].score == parallel[i].score;
    std::printf("score_pairs 20000x%d    serial %8.2f ms   openmp %8.2f ms   speedup %5.2fx   identical: %s\n",
                dim, ts, tp, ts / tp, same ? "yes" : "NO");
  }
  return 0;
}
