#include <cstdio>
#include <sstream>

#include "isa/metrics.hpp"
#include "json.hpp"

namespace isa {

namespace {

using ojson = nlohmann::ordered_json;

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson tau_json(const TauSummary& t) {
  ojson o;
  o["sf1"] = optional_json(t.sf1);
  o["sp"] = optional_json(t.sp);
  o["sr"] = optional_json(t.sr);
  o["tp"] = t.tp;
  o["fp"] = t.fp;
  o["fn"] = t.fn;
  return o;
}

ojson group_json(const GroupSummary& g) {
  ojson o;
  o["n_utterances"] = g.n_utt;
  o["n_fake"] = g.n_fake;
  o["n_genuine"] = g.n_genuine;
  o["ca"] = g.ca;
  o["miou"] = optional_json(g.miou);
  o["false_alarm_rate"] = optional_json(g.false_alarm_rate);
  for (const auto& t : g.per_tau) o["sf1@" + tau_key(t.tau)] = optional_json(t.sf1);
  return o;
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

std::string tau_key(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

std::string report_to_json(const MetricReport& report) {
  ojson root;
  root["taus"] = report.taus;
  root["genuine_policy"] =
      report.genuine_policy == GenuinePolicy::Exclude ? "exclude" : "count_false_alarms";
  root["miou_definition"] =
      "mIoU (toolkit definition): greedy matching on positive IoU, mean over ground-truth "
      "segments with unmatched segments counted as 0, macro-averaged over tampered utterances";
  root["overall"] = group_json(report.overall);
  ojson per_tau = ojson::object();
  for (const auto& t : report.overall.per_tau) per_tau[tau_key(t.tau)] = tau_json(t);
  root["per_tau"] = per_tau;
  ojson lang = ojson::object();
  for (const auto& [k, g] : report.per_language) lang[k] = group_json(g);
  root["per_language"] = lang;
  ojson var = ojson::object();
  for (const auto& [k, g] : report.per_variant) var[k] = group_json(g);
  root["per_variant"] = var;
  root["missing_predictions"] = report.missing_predictions;
  return root.dump(2) + "\n";
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "scope,key,n_utterances,n_fake,n_genuine,ca,miou,false_alarm_rate";
  for (double tau : report.taus) {
    auto k = tau_key(tau);
    os << ",sf1@" << k << ",sp@" << k << ",sr@" << k;
  }
  os << '\n';
  auto row = [&](const std::string& scope, const std::string& key, const GroupSummary& g) {
    os << scope << ',' << key << ',' << g.n_utt << ',' << g.n_fake << ',' << g.n_genuine << ','
       << csv_value(g.ca) << ',' << csv_value(g.miou) << ',' << csv_value(g.false_alarm_rate);
    for (const auto& t : g.per_tau)
      os << ',' << csv_value(t.sf1) << ',' << csv_value(t.sp) << ',' << csv_value(t.sr);
    os << '\n';
  };
  row("overall", "all", report.overall);
  for (const auto& [k, g] : report.per_language) row("language", k, g);
  for (const auto& [k, g] : report.per_variant) row("variant", k, g);
  return os.str();
}

}  // namespace isa
