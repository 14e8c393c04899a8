#include "cgate/backend.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"

namespace cgate {
namespace {

using nlohmann::json;

bool is_terminal(std::string_view status) {
  return status == "succeeded" || status == "failed" || status == "cancelled";
}

std::string provider_message(const httplib::Result& res) {
  if (!res) return "transport error: " + httplib::to_string(res.error());
  try {
    const auto body = json::parse(res->body);
    if (body.contains("error")) {
      const auto& err = body["error"];
      if (err.is_object() && err.contains("message")) return err["message"].get<std::string>();
      if (err.is_string()) return err.get<std::string>();
    }
  } catch (const json::exception&) {
  }
  return "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
}

}  // namespace

struct RemoteBackend::Impl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix such as /v1
  std::mutex job_store_mu;

  httplib::Client client(const RemoteOptions& o) const {
    httplib::Client c(origin);
    c.set_connection_timeout(o.connect_timeout_s, 0);
    c.set_read_timeout(o.read_timeout_s, 0);
    c.set_write_timeout(o.read_timeout_s, 0);
    return c;
  }
};

RemoteBackend::RemoteBackend(std::string profile_id, EndpointDescriptor endpoint, RemoteOptions options)
    : profile_id_(std::move(profile_id)),
      endpoint_(std::move(endpoint)),
      options_(std::move(options)),
      impl_(std::make_unique<Impl>()) {
  endpoint_.validate();
  const auto scheme_end = endpoint_.base_url.find("://") + 3;
  const auto slash = endpoint_.base_url.find('/', scheme_end);
  impl_->origin = endpoint_.base_url.substr(0, slash);
  impl_->prefix = slash == std::string::npos ? "" : endpoint_.base_url.substr(slash);
  while (!impl_->prefix.empty() && impl_->prefix.back() == '/') impl_->prefix.pop_back();
}

RemoteBackend::~RemoteBackend() = default;

namespace {

struct Call {
  const EndpointDescriptor& endpoint;
  const RemoteOptions& options;
  std::string token;

  static Call make(const EndpointDescriptor& ep, const RemoteOptions& o) {
    const char* tok = std::getenv(ep.auth_env.c_str());
    if (tok == nullptr || *tok == '\0') {
      throw BackendError("auth environment variable '" + ep.auth_env + "' is not set");
    }
    return Call{ep, o, tok};
  }

  httplib::Headers headers() const { return {{"Authorization", "Bearer " + token}}; }

  std::string redact(std::string s) const {
    for (std::size_t p = s.find(token); !token.empty() && p != std::string::npos; p = s.find(token, p)) {
      s.replace(p, token.size(), "***");
    }
    return s;
  }

  void log(std::string_view method, const std::string& path, const std::string& req, const httplib::Result& res) const {
    if (!options.log) return;
    std::ostringstream os;
    os << method << ' ' << path << " authorization=Bearer *** request=" << redact(req);
    if (res) {
      os << " status=" << res->status << " response=" << redact(res->body);
    } else {
      os << " error=" << httplib::to_string(res.error());
    }
    options.log(os.str());
  }
};

template <typename Send>
json send_with_retry(const Call& call, std::string_view method, const std::string& path, const std::string& req_log,
                     Send&& send) {
  int delay_ms = 200;
  for (int attempt = 0;; ++attempt) {
    httplib::Result res = send();
    call.log(method, path, req_log, res);
    const bool retryable = !res || res->status == 429 || res->status >= 500;
    if (res && res->status >= 200 && res->status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw BackendError(std::string(method) + " " + path + ": unparsable response: " + e.what());
      }
    }
    if (!retryable || attempt >= call.options.max_retries) {
      throw BackendError(std::string(method) + " " + path + " failed: " + provider_message(res));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    delay_ms = std::min(delay_ms * 2, 10000);
  }
}

}  // namespace

std::string RemoteBackend::to_chat_jsonl(std::span<const TrainingExample> training_set) {
  std::string out;
  for (const auto& ex : training_set) {
    json line = {{"messages",
                  json::array({{{"role", "user"}, {"content", ex.prompt}},
                               {{"role", "assistant"}, {"content", ex.label}}})}};
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

ModelHandle RemoteBackend::fine_tune(std::span<const TrainingExample> training_set, const FineTuneParams& params) {
  params.validate();
  if (training_set.empty()) throw ValidationError("fine_tune: empty training set");
  const Call call = Call::make(endpoint_, options_);
  const std::string upload = to_chat_jsonl(training_set);
  const std::string digest = sha256_hex(upload + "|" + std::to_string(params.epochs) + "|" +
                                        std::to_string(params.learning_rate) + "|" + endpoint_.model_id);

  std::string job_id;
  if (!options_.job_store_path.empty()) {
    std::lock_guard lock(impl_->job_store_mu);
    std::ifstream in(options_.job_store_path);
    if (in) {
      try {
        const json store = json::parse(in);
        if (store.contains(digest)) job_id = store[digest].get<std::string>();
      } catch (const json::exception&) {
      }
    }
  }

  if (job_id.empty()) {
    const std::string files_path = impl_->prefix + "/files";
    httplib::MultipartFormDataItems items = {
        {"purpose", "fine-tune", "", ""},
        {"file", upload, "training.jsonl", "application/jsonl"},
    };
    const json file = send_with_retry(call, "POST", files_path, "<multipart training.jsonl " + digest + ">", [&] {
      return impl_->client(options_).Post(files_path, call.headers(), items);
    });
    if (!file.contains("id")) throw BackendError("file upload response lacks id");

    json body = {{"model", endpoint_.model_id},
                 {"training_file", file["id"]},
                 {"seed", params.seed},
                 {"hyperparameters", {{"n_epochs", params.epochs}, {"learning_rate", params.learning_rate}}}};
    const std::string jobs_path = impl_->prefix + "/fine_tuning/jobs";
    const std::string payload = body.dump();
    const json job = send_with_retry(call, "POST", jobs_path, payload, [&] {
      return impl_->client(options_).Post(jobs_path, call.headers(), payload, "application/json");
    });
    if (!job.contains("id")) throw BackendError("fine-tune job response lacks id");
    job_id = job["id"].get<std::string>();

    if (!options_.job_store_path.empty()) {
      std::lock_guard lock(impl_->job_store_mu);
      json store = json::object();
      if (std::ifstream in(options_.job_store_path); in) {
        try {
          store = json::parse(in);
        } catch (const json::exception&) {
        }
      }
      store[digest] = job_id;
      const std::string tmp = options_.job_store_path + ".tmp";
      std::ofstream(tmp) << store.dump(2) << '\n';
      std::filesystem::rename(tmp, options_.job_store_path);
    }
  }

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(options_.timeout_s);
  const std::string job_path = impl_->prefix + "/fine_tuning/jobs/" + job_id;
  int delay_ms = options_.poll_initial_ms;
  for (;;) {
    const json job = send_with_retry(call, "GET", job_path, "", [&] {
      return impl_->client(options_).Get(job_path, call.headers());
    });
    const std::string status = job.value("status", "");
    if (is_terminal(status)) {
      if (status != "succeeded") {
        std::string msg = "fine-tune job " + job_id + " " + status;
        if (job.contains("error") && job["error"].is_object() && job["error"].contains("message")) {
          msg += ": " + job["error"]["message"].get<std::string>();
        }
        throw BackendError(msg);
      }
      if (!job.contains("fine_tuned_model") || !job["fine_tuned_model"].is_string()) {
        throw BackendError("fine-tune job " + job_id + " succeeded without a model id");
      }
      ModelHandle h;
      h.handle_id = job["fine_tuned_model"].get<std::string>();
      h.backend_profile = profile_id_;
      h.profile = endpoint_.profile;
      h.provider_info = {{"job_id", job_id}};
      if (job.contains("hyperparameters")) h.provider_info["hyperparameters"] = job["hyperparameters"];
      return h;
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      throw BackendError("fine-tune job " + job_id + " timed out in status '" + status + "'");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
    delay_ms = std::min(delay_ms * 2, options_.poll_max_ms);
  }
}

std::string RemoteBackend::chat(std::string_view model, std::string_view system, std::string_view user,
                                std::uint64_t seed) {
  const Call call = Call::make(endpoint_, options_);
  json messages = json::array();
  if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
  messages.push_back({{"role", "user"}, {"content", user}});
  const json body = {{"model", model}, {"messages", messages}, {"seed", seed}};
  const std::string path = impl_->prefix + "/chat/completions";
  const std::string payload = body.dump();
  const json res = send_with_retry(call, "POST", path, payload, [&] {
    return impl_->client(options_).Post(path, call.headers(), payload, "application/json");
  });
  try {
    const auto& content = res.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string() : content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendError(std::string("chat completion response malformed: ") + e.what());
  }
}

std::string RemoteBackend::generate(const ModelHandle& handle, std::string_view prompt, std::uint64_t gen_seed) {
  if (handle.backend_profile != profile_id_) {
    throw BackendError("unknown model handle '" + handle.handle_id + "' for profile '" + profile_id_ + "'");
  }
  return chat(handle.handle_id, {}, prompt, gen_seed);
}

}  // namespace cgate
