#include "qaexpert/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "qaexpert/errors.hpp"
#include "qaexpert/rng.hpp"

namespace qaexpert {

namespace pt = boost::property_tree;

std::string topic_name(const std::string& subsite, const std::string& tag) { return subsite + "/" + tag; }

const Post* QaDataset::find(std::size_t subsite, PostId id) const {
  auto it = std::lower_bound(posts.begin(), posts.end(), std::pair{subsite, id}, [](const Post& p, const auto& key) {
    return std::pair{p.subsite, p.id} < key;
  });
  if (it == posts.end() || it->subsite != subsite || it->id != id) return nullptr;
  return &*it;
}

std::vector<std::string> QaDataset::topic_names() const {
  std::set<std::string> names;
  for (const auto& p : posts)
    for (const auto& t : p.tags) names.insert(topic_name(subsites[p.subsite], t));
  return {names.begin(), names.end()};
}

void QaDataset::validate() const {
  if (!std::is_sorted(users.begin(), users.end()) || std::adjacent_find(users.begin(), users.end()) != users.end()) {
    throw DataError("user table is not sorted and unique");
  }
  for (std::size_t i = 1; i < posts.size(); ++i) {
    if (std::pair{posts[i - 1].subsite, posts[i - 1].id} >= std::pair{posts[i].subsite, posts[i].id}) {
      throw DataError(fmt::format("posts not sorted or duplicate id {}", posts[i].id));
    }
  }
  for (const auto& p : posts) {
    if (p.subsite >= subsites.size()) throw DataError(fmt::format("post {} has an unknown subsite", p.id));
    if (p.kind == PostKind::answer) {
      const Post* q = p.parent ? find(p.subsite, *p.parent) : nullptr;
      if (!q || q->kind != PostKind::question) {
        throw DataError(fmt::format("answer {} references missing parent question {}", p.id,
                                    p.parent ? std::to_string(*p.parent) : "-"));
      }
      if (!p.tags.empty()) throw DataError(fmt::format("answer {} carries tags", p.id));
    } else if (p.accepted_answer) {
      const Post* a = find(p.subsite, *p.accepted_answer);
      if (!a || a->kind != PostKind::answer || a->parent != p.id) {
        throw DataError(fmt::format("question {} accepts {} which is not one of its answers", p.id,
                                    *p.accepted_answer));
      }
    }
  }
  for (const auto& v : votes) {
    if (!find(v.subsite, v.post)) throw DataError(fmt::format("vote on missing post {}", v.post));
  }
}

namespace {

std::string slurp(std::istream& in) {
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Row elements of a dump file: <anything><row a="..."/>...</anything>.
std::vector<pt::ptree> read_rows(std::istream& in, const std::string& source) {
  const std::string text = slurp(in);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return {};
  std::istringstream stream(text);
  pt::ptree doc;
  try {
    pt::read_xml(stream, doc);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError(source, static_cast<std::int64_t>(e.line()), e.message());
  }
  std::vector<pt::ptree> rows;
  for (const auto& [name, top] : doc) {
    if (name == "<xmlcomment>") continue;
    for (const auto& [child, row] : top) {
      if (child == "row") {
        if (auto attrs = row.get_child_optional("<xmlattr>")) rows.push_back(*attrs);
      }
    }
  }
  return rows;
}

std::optional<std::int64_t> int_attr(const pt::ptree& attrs, const char* key, const std::string& source) {
  const auto raw = attrs.get_optional<std::string>(key);
  if (!raw || raw->empty()) return std::nullopt;
  std::int64_t v = 0;
  const char* end = raw->data() + raw->size();
  const auto [ptr, ec] = std::from_chars(raw->data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(source, 0, fmt::format("attribute {}=\"{}\" is not an integer", key, *raw));
  }
  return v;
}

std::int64_t required_int(const pt::ptree& attrs, const char* key, const std::string& source) {
  auto v = int_attr(attrs, key, source);
  if (!v) throw ParseError(source, 0, fmt::format("row without {}", key));
  return *v;
}

// "<a><b>" or "|a|b|".
std::vector<std::string> split_tags(const std::string& raw) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : raw) {
    if (c == '<' || c == '>' || c == '|') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  std::vector<std::string> unique;
  for (auto& t : out)
    if (std::find(unique.begin(), unique.end(), t) == unique.end()) unique.push_back(std::move(t));
  return unique;
}

// Drops what cannot be kept consistently, then checks the rest.
void normalize(QaDataset& d) {
  std::sort(d.users.begin(), d.users.end());
  d.users.erase(std::unique(d.users.begin(), d.users.end()), d.users.end());
  std::sort(d.posts.begin(), d.posts.end(),
            [](const Post& a, const Post& b) { return std::pair{a.subsite, a.id} < std::pair{b.subsite, b.id}; });
  for (std::size_t i = 1; i < d.posts.size(); ++i) {
    if (d.posts[i - 1].subsite == d.posts[i].subsite && d.posts[i - 1].id == d.posts[i].id) {
      throw DataError(fmt::format("duplicate post id {} in subsite {}", d.posts[i].id, d.subsites[d.posts[i].subsite]));
    }
  }
  for (auto& p : d.posts) {
    if (p.kind != PostKind::question || !p.accepted_answer) continue;
    const Post* a = d.find(p.subsite, *p.accepted_answer);
    if (!a || a->kind != PostKind::answer || a->parent != p.id) {
      ++d.counters.dangling_accepts;
      p.accepted_answer.reset();
    }
  }
  std::erase_if(d.votes, [&](const Vote& v) {
    const bool missing = d.find(v.subsite, v.post) == nullptr;
    if (missing) ++d.counters.votes_on_missing_posts;
    return missing;
  });
  std::sort(d.votes.begin(), d.votes.end(), [](const Vote& a, const Vote& b) {
    return std::tuple{a.subsite, a.post, static_cast<int>(a.kind), a.voter.value_or(-1)} <
           std::tuple{b.subsite, b.post, static_cast<int>(b.kind), b.voter.value_or(-1)};
  });
  d.validate();
}

void add_counter_warnings(QaDataset& d) {
  const auto& c = d.counters;
  if (c.unknown_vote_kinds) d.warnings.push_back(fmt::format("ignored {} votes of other kinds", c.unknown_vote_kinds));
  if (c.other_post_kinds) d.warnings.push_back(fmt::format("ignored {} posts of other kinds", c.other_post_kinds));
  if (c.votes_on_missing_posts) {
    d.warnings.push_back(fmt::format("ignored {} votes on missing posts", c.votes_on_missing_posts));
  }
  if (c.dangling_accepts) {
    d.warnings.push_back(fmt::format("cleared {} accepted-answer ids without a matching answer", c.dangling_accepts));
  }
  if (c.missing_owners) d.warnings.push_back(fmt::format("{} posts have no owner", c.missing_owners));
}

QaDataset parse_streams(std::istream& posts, const std::string& posts_src, std::istream& votes,
                        const std::string& votes_src, std::istream& users, const std::string& users_src,
                        const std::string& subsite_name) {
  QaDataset d;
  d.subsites.push_back(subsite_name);
  for (const auto& row : read_rows(posts, posts_src)) {
    const auto type = required_int(row, "PostTypeId", posts_src);
    if (type != 1 && type != 2) {
      ++d.counters.other_post_kinds;
      continue;
    }
    Post p;
    p.id = required_int(row, "Id", posts_src);
    p.kind = type == 1 ? PostKind::question : PostKind::answer;
    p.owner = int_attr(row, "OwnerUserId", posts_src);
    if (!p.owner) ++d.counters.missing_owners;
    p.score = int_attr(row, "Score", posts_src);
    if (p.kind == PostKind::answer) {
      p.parent = int_attr(row, "ParentId", posts_src);
      if (!p.parent) throw DataError(fmt::format("answer {} has no ParentId", p.id));
    } else {
      p.accepted_answer = int_attr(row, "AcceptedAnswerId", posts_src);
      p.tags = split_tags(row.get<std::string>("Tags", ""));
    }
    d.posts.push_back(std::move(p));
  }
  for (const auto& row : read_rows(votes, votes_src)) {
    const auto type = required_int(row, "VoteTypeId", votes_src);
    Vote v;
    switch (type) {
      case 1: v.kind = VoteKind::accept; break;
      case 2: v.kind = VoteKind::upvote; break;
      case 3: v.kind = VoteKind::downvote; break;
      default: ++d.counters.unknown_vote_kinds; continue;
    }
    v.post = required_int(row, "PostId", votes_src);
    v.voter = int_attr(row, "UserId", votes_src);
    d.votes.push_back(v);
  }
  for (const auto& row : read_rows(users, users_src)) d.users.push_back(required_int(row, "Id", users_src));
  normalize(d);
  add_counter_warnings(d);
  return d;
}

}  // namespace

QaDataset parse_dump(std::istream& posts, std::istream& votes, std::istream& users, const std::string& subsite_name,
                     const std::string& source) {
  return parse_streams(posts, source + "/Posts.xml", votes, source + "/Votes.xml", users, source + "/Users.xml",
                       subsite_name);
}

QaDataset parse_dump(const std::filesystem::path& posts_file, const std::filesystem::path& votes_file,
                     const std::filesystem::path& users_file, const std::string& subsite_name) {
  auto open = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(fmt::format("cannot open {}", p.string()));
    return in;
  };
  auto posts = open(posts_file);
  auto votes = open(votes_file);
  auto users = open(users_file);
  return parse_streams(posts, posts_file.string(), votes, votes_file.string(), users, users_file.string(),
                       subsite_name);
}

QaDataset merge(std::vector<QaDataset> parts) {
  QaDataset out;
  for (auto& part : parts) {
    const std::size_t offset = out.subsites.size();
    for (auto& name : part.subsites) {
      if (std::find(out.subsites.begin(), out.subsites.end(), name) != out.subsites.end()) {
        throw ContractViolation(fmt::format("subsite {} appears twice", name));
      }
      out.subsites.push_back(std::move(name));
    }
    for (auto& p : part.posts) {
      p.subsite += offset;
      out.posts.push_back(std::move(p));
    }
    for (auto& v : part.votes) {
      v.subsite += offset;
      out.votes.push_back(v);
    }
    out.users.insert(out.users.end(), part.users.begin(), part.users.end());
    auto& c = out.counters;
    c.unknown_vote_kinds += part.counters.unknown_vote_kinds;
    c.other_post_kinds += part.counters.other_post_kinds;
    c.votes_on_missing_posts += part.counters.votes_on_missing_posts;
    c.dangling_accepts += part.counters.dangling_accepts;
    c.missing_owners += part.counters.missing_owners;
    for (auto& w : part.warnings) out.warnings.push_back(std::move(w));
  }
  normalize(out);
  return out;
}

QaDataset sample_dataset(const QaDataset& data, std::size_t n_users, std::uint64_t seed) {
  if (n_users < 1) throw ContractViolation("n_users must be at least 1");
  QaDataset out;
  out.subsites = data.subsites;
  out.counters = data.counters;
  out.warnings = data.warnings;
  if (n_users > data.users.size()) {
    out.warnings.push_back(fmt::format("asked for {} users but only {} exist", n_users, data.users.size()));
    n_users = data.users.size();
  }
  std::vector<UserId> pool = data.users;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_users; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n_users);
  std::sort(pool.begin(), pool.end());
  out.users = pool;
  auto sampled = [&](const std::optional<UserId>& u) { return u && std::binary_search(pool.begin(), pool.end(), *u); };

  std::vector<bool> keep(data.posts.size(), false);
  for (std::size_t i = 0; i < data.posts.size(); ++i) {
    const Post& p = data.posts[i];
    if (p.kind == PostKind::question) {
      keep[i] = keep[i] || sampled(p.owner);
      continue;
    }
    const Post* q = data.find(p.subsite, *p.parent);
    if (sampled(p.owner) || sampled(q->owner)) {
      keep[i] = true;
      keep[static_cast<std::size_t>(q - data.posts.data())] = true;
    }
  }
  for (std::size_t i = 0; i < data.posts.size(); ++i) {
    if (keep[i]) out.posts.push_back(data.posts[i]);
  }
  for (auto& p : out.posts) {
    if (p.accepted_answer && !out.find(p.subsite, *p.accepted_answer)) p.accepted_answer.reset();
  }
  for (const auto& v : data.votes) {
    if (out.find(v.subsite, v.post)) out.votes.push_back(v);
  }
  out.validate();
  return out;
}

std::vector<std::pair<UserId, std::int64_t>> ReputationLedger::ranking(const std::string& topic) const {
  std::vector<std::pair<UserId, std::int64_t>> out;
  for (const auto& [key, score] : scores)
    if (key.second == topic) out.emplace_back(key.first, score);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

ReputationLedger reputation_scores(const QaDataset& data) {
  ReputationLedger ledger;
  auto credit = [&](const std::optional<UserId>& user, const Post& governing, std::int64_t amount) {
    if (!user) return;
    for (const auto& tag : governing.tags) ledger.scores[{*user, topic_name(data.subsites[governing.subsite], tag)}] += amount;
  };
  auto governing = [&](const Post& p) -> const Post& {
    return p.kind == PostKind::question ? p : *data.find(p.subsite, *p.parent);
  };

  std::set<std::pair<std::size_t, PostId>> accepted;
  for (const auto& p : data.posts) {
    if (p.kind == PostKind::question && p.accepted_answer) accepted.insert({p.subsite, *p.accepted_answer});
  }
  for (const auto& v : data.votes) {
    const Post& p = *data.find(v.subsite, v.post);
    const Post& q = governing(p);
    switch (v.kind) {
      case VoteKind::accept:
        if (p.kind == PostKind::answer) accepted.insert({p.subsite, p.id});
        break;
      case VoteKind::upvote:
        credit(p.owner, q, p.kind == PostKind::answer ? 10 : 5);
        break;
      case VoteKind::downvote:
        credit(p.owner, q, -2);
        if (p.kind == PostKind::answer) {
          if (v.voter) {
            credit(v.voter, q, -1);
          } else {
            ++ledger.skipped_anonymous_downvotes;
          }
        }
        break;
    }
  }
  for (const auto& [subsite, id] : accepted) {
    const Post& a = *data.find(subsite, id);
    credit(a.owner, governing(a), 15);
  }
  return ledger;
}

void write_reputation_csv(std::ostream& out, const ReputationLedger& ledger) {
  out << "user_id,topic,score\n";
  for (const auto& [key, score] : ledger.scores) out << key.first << ',' << key.second << ',' << score << '\n';
}

ReputationLedger read_reputation_csv(std::istream& in, const std::string& source) {
  ReputationLedger ledger;
  std::string line;
  std::int64_t n = 0;
  auto fail = [&](const std::string& what) { throw ParseError(source, n, what); };
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (n == 1) {
      if (line != "user_id,topic,score") fail("expected header 'user_id,topic,score'");
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    if (a == std::string::npos || a == b) fail("expected 'user_id,topic,score'");
    std::int64_t user = 0, score = 0;
    const auto r1 = std::from_chars(line.data(), line.data() + a, user);
    const auto r2 = std::from_chars(line.data() + b + 1, line.data() + line.size(), score);
    if (r1.ec != std::errc() || r1.ptr != line.data() + a || r2.ec != std::errc() ||
        r2.ptr != line.data() + line.size()) {
      fail("bad number");
    }
    ledger.scores[{user, line.substr(a + 1, b - a - 1)}] = score;
  }
  return ledger;
}

}  // namespace qaexpert
