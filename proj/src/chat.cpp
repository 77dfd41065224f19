#include "hat/chat.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hat/errors.hpp"

namespace hat {

namespace {

bool placeholder_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

std::string trim_blank_edges(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == '\n' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == '\n' || s[e - 1] == '\r' || s[e - 1] == ' ' ||
                   s[e - 1] == '\t')) {
    --e;
  }
  return s.substr(b, e - b);
}

}  // namespace

MockChatClient::MockChatClient(std::vector<MockScriptEntry> script)
    : script_(std::move(script)) {}

MockChatClient MockChatClient::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open chat fixture: " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("script") ||
      !doc["script"].is_array()) {
    throw DataError("malformed chat fixture (want {\"script\": [...]}): " +
                    path);
  }
  std::vector<MockScriptEntry> script;
  for (const auto& row : doc["script"]) {
    MockScriptEntry e;
    e.expect = row.value("expect", "");
    if (!row.contains("reply") || !row["reply"].is_string()) {
      throw DataError("chat fixture entry missing \"reply\": " + path);
    }
    e.reply = row["reply"].get<std::string>();
    script.push_back(std::move(e));
  }
  return MockChatClient(std::move(script));
}

std::string MockChatClient::complete(const std::vector<ChatMessage>& messages) {
  requests_.push_back(messages);
  if (next_ >= script_.size()) {
    throw DataError("mock chat script exhausted at call " +
                    std::to_string(next_ + 1));
  }
  const MockScriptEntry& entry = script_[next_];
  if (!entry.expect.empty()) {
    const ChatMessage* last_user = nullptr;
    for (const ChatMessage& m : messages) {
      if (m.role == "user") last_user = &m;
    }
    if (last_user == nullptr ||
        last_user->content.find(entry.expect) == std::string::npos) {
      throw DataError("mock chat call " + std::to_string(next_ + 1) +
                      " expected the user message to contain \"" +
                      entry.expect + "\"");
    }
  }
  ++next_;
  return entry.reply;
}

std::string load_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open text asset: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    const char c = tpl[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < tpl.size() && placeholder_name_char(tpl[j])) ++j;
    if (j == i + 1 || j >= tpl.size() || tpl[j] != '}') {
      out.push_back(c);  // a literal brace, not a placeholder
      ++i;
      continue;
    }
    const std::string name = tpl.substr(i + 1, j - i - 1);
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw DataError("template placeholder {" + name + "} has no value");
    }
    out += it->second;
    i = j + 1;
  }
  return out;
}

std::vector<ChatMessage> parse_chat_template(const std::string& text) {
  std::vector<ChatMessage> out;
  std::string pending_role;
  std::string pending;
  bool in_section = false;
  auto flush = [&]() {
    if (!in_section) return;
    out.push_back({pending_role, trim_blank_edges(pending)});
    pending.clear();
  };
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("### ", 0) == 0) {
      const std::string role = line.substr(4);
      if (role != "system" && role != "user" && role != "assistant") {
        throw DataError("unknown chat template role: " + role);
      }
      flush();
      pending_role = role;
      in_section = true;
      continue;
    }
    if (!in_section) {
      if (line.find_first_not_of(" \t") != std::string::npos) {
        throw DataError("chat template text before the first ### section");
      }
      continue;
    }
    pending += line;
    pending += '\n';
  }
  flush();
  if (out.empty()) throw DataError("chat template has no sections");
  return out;
}

std::vector<ChatMessage> load_chat_template(
    const std::string& path, const std::map<std::string, std::string>& vars) {
  std::vector<ChatMessage> msgs = parse_chat_template(load_text_file(path));
  for (ChatMessage& m : msgs) m.content = render_template(m.content, vars);
  return msgs;
}

}  // namespace hat
