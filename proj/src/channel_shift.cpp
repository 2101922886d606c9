#include "unrollkit/channel_shift.hpp"

#include <set>

namespace unrollkit {

void validate_shifts(std::vector<Shift> const &shifts)
{
  if (shifts.empty()) {
    throw Error("channel shift: at least one shift is required");
  }
  std::set<Shift> seen;
  for (auto const &s : shifts) {
    if (s == Shift{0, 0}) {
      throw Error("channel shift: (0, 0) is implicit and may not be listed");
    }
    if (!seen.insert(s).second) {
      throw Error("channel shift: duplicate shift (" + std::to_string(s.first) + ", " + std::to_string(s.second) +
                  ")");
    }
  }
}

namespace {

void check_input(Shape const &s)
{
  if (s.size() != 4 || s[0] != 2) {
    throw Error("channel shift: expected [2, T, X, Y], got " + ShapeString(s));
  }
}

} // namespace

template <typename Real>
Tensor<Real> channel_shift_augment(Tensor<Real> const &x2ch, std::vector<Shift> const &shifts)
{
  validate_shifts(shifts);
  check_input(x2ch.shape());
  Index const n = x2ch.size();
  Shape shape = x2ch.shape();
  shape[0] = 2 * (1 + static_cast<Index>(shifts.size()));
  Tensor<Real> out(shape);
  out.vec().head(n) = x2ch.vec();
  for (size_t i = 0; i < shifts.size(); i++) {
    out.vec().segment((i + 1) * n, n) = circ_shift(circ_shift(x2ch, 2, shifts[i].first), 3, shifts[i].second).vec();
  }
  return out;
}

template <typename Real>
nn::Var channel_shift_augment(nn::Graph<Real> &g, nn::Var x2ch, std::vector<Shift> const &shifts)
{
  validate_shifts(shifts);
  check_input(g.value(x2ch).shape());
  std::vector<nn::Var> parts{x2ch};
  for (auto const &s : shifts) {
    parts.push_back(nn::circ_shift2d(g, x2ch, s.first, s.second));
  }
  return nn::concat_channels(g, parts);
}

std::vector<Shift> default_shifts(MaskKind kind, Index nx, Index ny)
{
  if (kind == MaskKind::PseudoRadial) {
    return {{0, ny / 2}, {nx / 2, 0}, {nx / 2, ny / 2}};
  }
  return {{0, ny / 4}, {0, ny / 2}, {0, 3 * ny / 4}};
}

template Tensor<float> channel_shift_augment(Tensor<float> const &, std::vector<Shift> const &);
template Tensor<double> channel_shift_augment(Tensor<double> const &, std::vector<Shift> const &);
template nn::Var channel_shift_augment(nn::Graph<float> &, nn::Var, std::vector<Shift> const &);
template nn::Var channel_shift_augment(nn::Graph<double> &, nn::Var, std::vector<Shift> const &);

} // namespace unrollkit
