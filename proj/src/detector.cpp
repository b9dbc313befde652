#include "logpurge/detector.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace logpurge {

using nlohmann::json;

NgramModel NgramModel::train(std::span<const LogSequence> sequences, int order, int top_k) {
  if (sequences.empty()) throw EmptyTrainingSet();
  if (order < 1) throw InvalidConfig("detector order must be >= 1");
  if (top_k < 1) throw InvalidConfig("detector top_k must be >= 1");

  NgramModel model;
  model.order_ = order;
  model.top_k_ = top_k;
  int max_tid = -1;
  for (const auto& seq : sequences) {
    for (int tid : seq.template_ids) max_tid = std::max(max_tid, tid);
    if (seq.template_ids.size() < static_cast<std::size_t>(order) + 1) continue;
    for (std::size_t i = order; i < seq.template_ids.size(); ++i) {
      std::vector<int> context(seq.template_ids.begin() + (i - order),
                               seq.template_ids.begin() + i);
      ++model.counts_[std::move(context)][seq.template_ids[i]];
    }
  }
  model.vocab_ = max_tid + 1;
  return model;
}

long NgramModel::transition_count(std::span<const int> context, int next) const {
  auto it = counts_.find(std::vector<int>(context.begin(), context.end()));
  if (it == counts_.end()) return 0;
  auto jt = it->second.find(next);
  return jt == it->second.end() ? 0 : jt->second;
}

NgramModel::Prediction NgramModel::predict_sequence(const LogSequence& seq, int top_k) const {
  if (top_k <= 0) top_k = top_k_;
  Prediction pred;
  if (seq.template_ids.size() < static_cast<std::size_t>(order_) + 1) {
    pred.too_short = true;  // treated normal with a warning flag
    return pred;
  }
  std::vector<int> context(order_);
  for (std::size_t i = order_; i < seq.template_ids.size(); ++i) {
    std::copy(seq.template_ids.begin() + (i - order_), seq.template_ids.begin() + i,
              context.begin());
    auto it = counts_.find(context);
    if (it == counts_.end()) {
      pred.label = Label::anomalous;  // unseen context
      return pred;
    }
    // Continuations ranked by raw count, ties by template id.
    std::vector<std::pair<long, int>> ranked;
    ranked.reserve(it->second.size());
    for (const auto& [tid, count] : it->second) ranked.emplace_back(count, tid);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const int actual = seq.template_ids[i];
    bool in_top = false;
    for (std::size_t t = 0; t < ranked.size() && t < static_cast<std::size_t>(top_k); ++t) {
      if (ranked[t].second == actual) {
        in_top = true;
        break;
      }
    }
    if (!in_top) {
      pred.label = Label::anomalous;
      return pred;
    }
  }
  return pred;
}

PrfResult NgramModel::evaluate(std::span<const LogSequence> labeled, int top_k) const {
  std::vector<Label> predictions, truth;
  for (const auto& seq : labeled) {
    if (!seq.ground_truth) continue;
    predictions.push_back(predict_sequence(seq, top_k).label);
    truth.push_back(*seq.ground_truth);
  }
  if (truth.empty()) throw NoLabels();
  return prf1(predictions, truth);
}

void NgramModel::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path.string());
  json header{{"order", order_}, {"top_k", top_k_}, {"vocab", vocab_}};
  out << header.dump() << '\n';
  // counts_ is ordered, so the table is written sorted.
  for (const auto& [context, nexts] : counts_) {
    for (const auto& [next, count] : nexts) {
      for (int c : context) out << c << ' ';
      out << next << ' ' << count << '\n';
    }
  }
}

NgramModel NgramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("model file is empty: " + path.string());
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded()) throw Error("model header malformed: " + path.string());

  NgramModel model;
  model.order_ = header.value("order", 3);
  model.top_k_ = header.value("top_k", 5);
  model.vocab_ = header.value("vocab", 0);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    std::vector<int> context(model.order_);
    for (int& c : context) ss >> c;
    int next;
    long count;
    if (!(ss >> next >> count)) throw Error("model row malformed: " + line);
    model.counts_[context][next] = count;
  }
  return model;
}

}  // namespace logpurge
